#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fusedgroup/io.hpp"
#include "support.hpp"

using namespace fusedgroup;

TEST_CASE("csv: quoting, embedded newlines and CRLF")
{
    std::istringstream in("a,b,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\r\n2,\"two\nlines\",z\r\n\r\n3,,\r\n");
    const CsvTable t = read_csv(in, "mem");
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][1] == "x,y");
    CHECK(t.rows[0][2] == "say \"hi\"");
    CHECK(t.rows[1][1] == "two\nlines");
    CHECK(t.rows[2][1].empty());
    CHECK(t.row_lines == std::vector<int>{2, 3, 6});
}

TEST_CASE("csv: round trip through the writer")
{
    const std::vector<std::string> fields{"plain", "com,ma", "quo\"te", "new\nline", ""};
    std::ostringstream out;
    write_csv_row(out, {"h1", "h2", "h3", "h4", "h5"});
    write_csv_row(out, fields);
    std::istringstream in(out.str());
    const CsvTable t = read_csv(in, "mem");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0] == fields);
}

TEST_CASE("csv: errors carry line numbers")
{
    std::istringstream ragged("a,b\n1,2\n3\n");
    CHECK_THROWS_WITH_AS(read_csv(ragged, "f.csv"), doctest::Contains("f.csv:3:"), InputError);
    std::istringstream open_quote("a,b\n1,\"2\n");
    CHECK_THROWS_WITH_AS(read_csv(open_quote, "f.csv"), doctest::Contains("f.csv:2:"), InputError);
    std::istringstream stray("a,b\n1,2\"x\"\n");
    CHECK_THROWS_AS(read_csv(stray, "f.csv"), InputError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_csv(empty, "f.csv"), InputError);
}

TEST_CASE("group maps from column names")
{
    const GroupMap m = infer_group_map({"t_2", "h_1", "y", "t_1", "h_2", "t_10", "h_10"}, "y");
    REQUIRE(m.size() == 3);
    CHECK(m[0] == std::vector<std::string>{"h_1", "t_1"});
    CHECK(m[1] == std::vector<std::string>{"h_2", "t_2"});
    CHECK(m[2] == std::vector<std::string>{"h_10", "t_10"});
    CHECK_THROWS_AS(infer_group_map({"x_1", "x_2", "z_2", "y"}, "y"), InputError);
    CHECK_THROWS_AS(infer_group_map({"x_1", "bad", "y"}, "y"), InputError);
}

TEST_CASE("dataset loading with numeric errors located")
{
    std::istringstream in("y,a_1,a_2\n1,2,3\n4,five,6\n");
    const CsvTable t = read_csv(in, "d.csv");
    const GroupMap m = infer_group_map(t.header, "y");
    CHECK_THROWS_WITH_AS(load_dataset(t, "d.csv", "y", m, false), doctest::Contains("d.csv:3:"), InputError);
    CHECK_THROWS_AS(load_dataset(t, "d.csv", "missing", m, false), InputError);

    std::istringstream ok("y,a_1,a_2\n1,2,3\n4,5,7\n0,1,2\n");
    const CsvTable u = read_csv(ok, "d.csv");
    const Dataset d = load_dataset(u, "d.csv", "y", infer_group_map(u.header, "y"), true);
    CHECK(d.design.groups() == 2);
    CHECK(d.design.group_size() == 1);
    REQUIRE(d.standardization);
    CHECK(d.standardization->center[0] == doctest::Approx(8.0 / 3.0));
    CHECK(d.design.X().col(0).mean() == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("group map files")
{
    const auto dir = testsupport::scratch_dir("groupmap");
    const auto good = (dir / "good.json").string();
    std::ofstream(good) << R"([["a","b"],["c","d"]])";
    CHECK(read_group_map_file(good).size() == 2);
    const auto uneven = (dir / "uneven.json").string();
    std::ofstream(uneven) << R"([["a","b"],["c"]])";
    CHECK_THROWS_AS(read_group_map_file(uneven), InputError);
    const auto broken = (dir / "broken.json").string();
    std::ofstream(broken) << "[\n[\"a\",\n";
    CHECK_THROWS_WITH_AS(read_group_map_file(broken), doctest::Contains("line"), InputError);
}

TEST_CASE("scenario config")
{
    std::istringstream in(R"(; comment
[gauss]
p = 1
g = 100
errors = gaussian
changes = 2
M = 200
seed = 7

[heavy]
p = 3
g = 20
errors = cauchy
changes = 20%
tau = 0.5
q = 1
estimators = fused_quantile, adaptive_fused_quantile
)");
    const auto specs = read_scenarios(in, "grid.ini");
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].name == "gauss");
    CHECK(specs[0].g == 100);
    CHECK(specs[0].M == 200);
    CHECK(specs[0].seed == 7);
    CHECK(specs[1].errors == ErrorDist::Cauchy);
    CHECK(specs[1].change_count() == 12);
    CHECK(specs[1].q == 1);
    CHECK(specs[1].estimators.size() == 2);

    std::istringstream unknown("[x]\ng = 10\nbogus = 1\n");
    CHECK_THROWS_WITH_AS(read_scenarios(unknown, "c.ini"), doctest::Contains("bogus"), InputError);
    std::istringstream too_many("[x]\ng = 3\nchanges = 5\n");
    CHECK_THROWS_AS(read_scenarios(too_many, "c.ini"), InputError);
    std::istringstream syntax("[x\ng = 3\n");
    CHECK_THROWS_WITH_AS(read_scenarios(syntax, "c.ini"), doctest::Contains("c.ini:1:"), InputError);
}

TEST_CASE("format_double round-trips")
{
    for (double v : {0.1, -2.5e-300, 1.0 / 3.0, 123456789.0}) CHECK(std::stod(format_double(v)) == v);
}
