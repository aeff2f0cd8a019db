#include "feederstats/io.hpp"

#include "support/planted.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace feederstats;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("feederstats_io_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class F>
std::size_t parse_error_line(F&& f) {
    try {
        f();
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST(Csv, NumbersRoundTripExactly) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        double back = 0.0;
        ASSERT_TRUE(io::try_parse_number(io::format_number(v), back));
        EXPECT_EQ(back, v);
    }
    EXPECT_EQ(io::format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Csv, SplitsAndTrims) {
    EXPECT_EQ(io::split_csv_line(" a, b ,,c\r"), (std::vector<std::string>{"a", "b", "", "c"}));
}

TEST(Csv, FieldCountMismatchReportsLine) {
    std::istringstream in("a,b\n1,2\n\n3\n");
    EXPECT_EQ(parse_error_line([&] { io::parse_csv(in, "t.csv"); }), 4u);
}

TEST(Csv, MissingColumnIsSchemaError) {
    std::istringstream in("parent,child,device\nroot,a,none\n");
    EXPECT_THROW(io::parse_tree_csv(in, "tree.csv"), SchemaError);
}

TEST(Loads, RoundTrip) {
    const std::vector<double> x{0.25, 1e-9, 74.28, 3.0};
    std::istringstream in(io::loads_csv(x));
    EXPECT_EQ(io::parse_loads_csv(in, "x"), x);
}

TEST(Loads, HeaderOptionalAndBadValueLine) {
    std::istringstream plain("1\n2.5\n");
    EXPECT_EQ(io::parse_loads_csv(plain, "x"), (std::vector<double>{1.0, 2.5}));
    std::istringstream bad("load_kwh\n1\nabc\n");
    EXPECT_EQ(parse_error_line([&] { io::parse_loads_csv(bad, "x"); }), 3u);
    std::istringstream empty("load_kwh\n");
    EXPECT_THROW(io::parse_loads_csv(empty, "x"), SchemaError);
}

TEST(Tree, ParsesEdgesAndRootLoad) {
    std::istringstream in(
        "parent,child,device,child_load_kwh\n"
        ",root,none,5\n"
        "root,a,fuse,3\n"
        "a,b,none,2\n"
        "root,c,switch,1\n");
    const auto t = io::parse_tree_csv(in, "tree.csv");
    EXPECT_EQ(t.root_load, 5.0);
    ASSERT_EQ(t.edges.size(), 3u);
    const auto tree = feeder::FeederTree::from_edges(t.edges, t.root_load);
    const auto groups = feeder::group_by_device(tree);
    const auto csv = io::groups_csv(groups);
    EXPECT_NE(csv.find("a,5,2\n"), std::string::npos);
    EXPECT_NE(csv.find("c,1,1\n"), std::string::npos);
    EXPECT_NE(csv.find("root,5,1\n"), std::string::npos);
}

TEST(Tree, UnknownDeviceReportsLine) {
    std::istringstream in("parent,child,device,child_load_kwh\nroot,a,fuse,1\nroot,b,breaker?,1\n");
    EXPECT_EQ(parse_error_line([&] { io::parse_tree_csv(in, "t"); }), 3u);
}

TEST(History, RoundTripWithNextDayTemperature) {
    auto h = planted::shape_history(planted::reference_shape(), 5, 0.01, 3);
    h.daily_mean_temp.push_back(h.daily_mean_temp.back());
    h.hourly_temp.push_back(h.hourly_temp.back());
    std::istringstream in(io::history_csv(h));
    std::vector<std::string> dates;
    const auto back = io::parse_history_csv(in, "h.csv", &dates);
    ASSERT_EQ(back.days.size(), 5u);
    EXPECT_TRUE(back.has_next_day_temperature());
    EXPECT_EQ(dates.front(), "2020-01-01");
    EXPECT_EQ(dates.back(), "2020-01-06");
    for (std::size_t d = 0; d < 5; ++d) EXPECT_EQ(back.days[d].hours, h.days[d].hours);
    EXPECT_EQ(back.hourly_temp, h.hourly_temp);
    for (std::size_t d = 0; d < back.daily_mean_temp.size(); ++d)
        EXPECT_NEAR(back.daily_mean_temp[d], h.daily_mean_temp[d], 1e-12);
}

TEST(History, IsoDates) {
    EXPECT_EQ(io::detail::iso_date(0), "1970-01-01");
    EXPECT_EQ(io::detail::iso_date(io::detail::kEpoch2020 + 59), "2020-02-29");
    EXPECT_EQ(io::detail::iso_date(io::detail::kEpoch2020 + 366), "2021-01-01");
}

TEST(History, StructuralErrors) {
    auto rows = [](const std::string& date, const std::string& load, int hours) {
        std::string s;
        for (int h = 0; h < hours; ++h) s += date + "," + std::to_string(h) + "," + load + ",10\n";
        return s;
    };
    const std::string head = "date,hour,load_kwh,temp_c\n";
    {
        std::istringstream in(head + rows("d1", "1", 23));
        EXPECT_EQ(parse_error_line([&] { io::parse_history_csv(in, "h"); }), 2u);
    }
    {
        std::istringstream in(head + rows("d1", "", 24) + rows("d2", "1", 24));
        EXPECT_THROW(io::parse_history_csv(in, "h"), ParseError);
    }
    {
        std::istringstream in(head + rows("d1", "1", 12) + rows("d2", "1", 24) + rows("d1", "1", 1));
        EXPECT_EQ(parse_error_line([&] { io::parse_history_csv(in, "h"); }), 38u);
    }
    {
        std::istringstream in(head + "d1,24,1,10\n");
        EXPECT_EQ(parse_error_line([&] { io::parse_history_csv(in, "h"); }), 2u);
    }
    {
        std::istringstream in(head + rows("d1", "-1", 1));
        EXPECT_THROW(io::parse_history_csv(in, "h"), ParseError);
    }
}

TEST(Models, TotalRoundTrip) {
    forecast::ArxModel m{2, {0.5, 0.3}, {0.1, 0.05, 0.02}, 1.5};
    const auto back = io::arx_from_json(nlohmann::json::parse(io::to_json(m).dump()));
    EXPECT_EQ(back.lag, m.lag);
    EXPECT_EQ(back.exog, m.exog);
    EXPECT_EQ(back.intercept, m.intercept);
}

TEST(Models, ShapeRoundTrip) {
    const auto m = planted::reference_shape();
    const auto back = io::varx_from_json(nlohmann::json::parse(io::to_json(m).dump()));
    EXPECT_EQ(back.order, m.order);
    EXPECT_EQ(planted::coefficients(back), planted::coefficients(m));
    EXPECT_EQ(back.intercept, m.intercept);
}

TEST(Models, RejectsMissingOrientationAndBadShapes) {
    auto j = io::to_json(forecast::ArxModel{1, {0.5}, {0.1, 0.2}, 0.0});
    j.erase("lag_orientation");
    EXPECT_THROW(io::arx_from_json(j), SchemaError);
    auto k = io::to_json(forecast::ArxModel{1, {0.5}, {0.1, 0.2}, 0.0});
    k["exog"] = {0.1};
    EXPECT_THROW(io::arx_from_json(k), SchemaError);
    auto s = io::to_json(planted::reference_shape());
    s["lag"][0].erase(0);
    EXPECT_THROW(io::varx_from_json(s), SchemaError);
}

TEST(AggCurve, RoundTrip) {
    const std::vector<scaling::AggregationPoint> pts{{0.85, 40.2, 1, 0}, {1700.0, 6.5, 2000, 19}};
    std::istringstream in(io::agg_curve_csv(pts));
    const auto back = io::parse_agg_curve_csv(in, "c");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].W, pts[i].W);
        EXPECT_EQ(back[i].cv, pts[i].cv);
        EXPECT_EQ(back[i].n_customers, pts[i].n_customers);
        EXPECT_EQ(back[i].replicate, pts[i].replicate);
    }
}

TEST(ScalingJson, CriticalLoadNullWithoutFloor) {
    EXPECT_TRUE(io::to_json(scaling::ScalingLaw{100.0, 0.0, 1.0, 0.0})["w_star"].is_null());
    EXPECT_NEAR(io::to_json(scaling::ScalingLaw{3561.0, 41.9, 1.0, 0.0})["w_star"].get<double>(), 3561.0 / 41.9, 1e-12);
}

TEST(SynthConfigJson, RoundTripAndDefaults) {
    synth::SynthConfig c;
    c.n_customers = 7;
    c.noise.kind = synth::NoiseKind::Exponential;
    c.noise.ar_phi = 0.4;
    c.size.kappa = 0.2;
    c.seed = 99;
    const auto back = io::synth_config_from_json(nlohmann::json::parse(io::to_json(c).dump()));
    EXPECT_EQ(io::to_json(back), io::to_json(c));

    const auto partial = io::synth_config_from_json(nlohmann::json{{"n_customers", 3}});
    EXPECT_EQ(partial.n_customers, 3u);
    EXPECT_EQ(partial.n_days, synth::SynthConfig{}.n_days);

    EXPECT_THROW(io::synth_config_from_json(nlohmann::json{{"noise", {{"kind", "laplace"}}}}), SchemaError);
    EXPECT_THROW(io::synth_config_from_json(nlohmann::json{{"n_days", "many"}}), SchemaError);
    EXPECT_THROW(io::synth_config_from_json(nlohmann::json{{"n_days", 5}}), InvalidParameter);
}

TEST(Files, AtomicWriteReplacesAndLeavesNoTemporaries) {
    const auto dir = scratch_dir("atomic");
    const auto path = dir / "nested" / "out.csv";
    io::write_file_atomic(path, "first\n");
    io::write_file_atomic(path, "second\n");
    EXPECT_EQ(slurp(path), "second\n");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(path.parent_path())) files += e.is_regular_file();
    EXPECT_EQ(files, 1u);
    fs::remove_all(dir);
}

TEST(Files, PopulationDirInNameOrder) {
    const auto dir = scratch_dir("pop");
    synth::SynthConfig c;
    c.n_customers = 3;
    c.n_days = 30;
    const auto pop = synth::synth_population(c);
    for (std::size_t i = 0; i < pop.size(); ++i)
        io::write_file_atomic(dir / ("customer_" + std::to_string(i) + ".csv"), io::history_csv(pop[i]));
    io::write_file_atomic(dir / "notes.txt", "ignored");
    const auto back = io::read_population_dir(dir);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i].days[29].hours, pop[i].days[29].hours);
    fs::remove_all(dir);
    EXPECT_THROW(io::read_population_dir(scratch_dir("empty")), SchemaError);
}
