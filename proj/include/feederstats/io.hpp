#pragma once

// CSV and JSON interchange: load samples, feeder edge lists, long-format
// load/temperature histories, curve outputs, and model/config documents.
// Numbers are written in shortest round-trip form, so every emitted CSV reads
// back to the identical doubles.

#include "feederstats/error.hpp"
#include "feederstats/feeder.hpp"
#include "feederstats/forecaster.hpp"
#include "feederstats/residuals.hpp"
#include "feederstats/scaling.hpp"
#include "feederstats/synth.hpp"
#include "feederstats/tailmodel.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

namespace feederstats::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Low-level CSV helpers

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline bool try_parse_number(std::string_view s, double& out) {
    s = trim(s);
    if (s == "nan") return out = std::numeric_limits<double>::quiet_NaN(), true;
    if (s == "inf") return out = std::numeric_limits<double>::infinity(), true;
    if (s == "-inf") return out = -std::numeric_limits<double>::infinity(), true;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size() && !s.empty();
}

inline double parse_number(std::string_view s, const std::string& source, std::size_t line, const char* column) {
    double v;
    if (!try_parse_number(s, v))
        throw ParseError(source, line, std::string("column '") + column + "': '" + std::string(s) + "' is not a number");
    return v;
}

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

/// Reads a headed CSV; blank lines are skipped and every row must have the
/// header's column count.
inline CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(source, lineno, "expected " + std::to_string(t.header.size()) + " fields, got " +
                                                 std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) throw SchemaError(source + ": empty file");
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_csv(in, path.string());
}

/// Writes `content` to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename onto " + path.string() + ": " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// Load samples: one column, optional `load_kwh` header

inline std::vector<double> parse_loads_csv(std::istream& in, const std::string& source) {
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto cell = trim(line);
        if (cell.empty()) continue;
        if (first) {
            first = false;
            if (cell == "load_kwh") continue;
        }
        if (cell.find(',') != std::string_view::npos)
            throw ParseError(source, lineno, "expected a single load_kwh column");
        out.push_back(parse_number(cell, source, lineno, "load_kwh"));
    }
    if (out.empty()) throw SchemaError(source + ": no load values");
    return out;
}

inline std::vector<double> read_loads_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_loads_csv(in, path.string());
}

inline std::string loads_csv(std::span<const double> loads) {
    std::string s = "load_kwh\n";
    for (double v : loads) s += format_number(v) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Tail diagnostics

inline std::string mean_excess_csv(std::span<const tail::MeanExcessPoint> pts) {
    std::string s = "u_kwh,mean_excess_kwh,exceedances\n";
    for (const auto& p : pts)
        s += format_number(p.threshold) + "," + format_number(p.mean_excess) + "," + std::to_string(p.exceedances) + "\n";
    return s;
}

inline std::string curve_csv(std::span<const tail::CurvePoint> pts, const char* x_name, const char* y_name) {
    std::string s = std::string(x_name) + "," + y_name + "\n";
    for (const auto& p : pts) s += format_number(p.x) + "," + format_number(p.y) + "\n";
    return s;
}

inline json to_json(const tail::GpdFit& f) {
    return json{{"theta", f.params.theta},
                {"kappa", f.params.kappa},
                {"sigma", f.params.sigma},
                {"ci_kappa", {f.ci_kappa.lo, f.ci_kappa.hi}},
                {"ci_sigma", {f.ci_sigma.lo, f.ci_sigma.hi}},
                {"log_likelihood", f.log_likelihood},
                {"n", f.n},
                {"confidence", 0.95}};
}

// ---------------------------------------------------------------------------
// Feeder trees: parent,child,device,child_load_kwh. A row with an empty parent
// sets the root's own load.

struct TreeInput {
    std::vector<feeder::EdgeSpec> edges;
    double root_load = 0.0;
};

inline TreeInput parse_tree_csv(std::istream& in, const std::string& source) {
    const auto t = parse_csv(in, source);
    const auto cp = t.column("parent"), cc = t.column("child"), cd = t.column("device"),
               cl = t.column("child_load_kwh");
    TreeInput out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const double load = parse_number(row[cl], source, t.line_numbers[r], "child_load_kwh");
        if (row[cp].empty()) {
            out.root_load = load;
            continue;
        }
        try {
            out.edges.push_back({row[cp], row[cc], feeder::parse_device(row[cd]), load});
        } catch (const InvalidParameter& e) {
            throw ParseError(source, t.line_numbers[r], e.what());
        }
    }
    return out;
}

inline feeder::FeederTree read_tree_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    auto input = parse_tree_csv(in, path.string());
    return feeder::FeederTree::from_edges(input.edges, input.root_load);
}

inline std::string groups_csv(std::span<const feeder::DeviceGroup> groups) {
    std::string s = "group_edge,total_load_kwh,n_vertices\n";
    for (const auto& g : groups)
        s += (g.is_root_residual() ? std::string("root") : g.device_edge) + "," + format_number(g.total_load) + "," +
             std::to_string(g.members.size()) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Histories: long format date,hour,load_kwh,temp_c. A final date with empty
// load_kwh carries the next day's temperatures only.

namespace detail {

// Proleptic Gregorian date for a day count from 1970-01-01.
inline std::string iso_date(long days_since_epoch) {
    long z = days_since_epoch + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const long doe = z - era * 146097;
    const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    long y = yoe + era * 400;
    const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long mp = (5 * doy + 2) / 153;
    const long d = doy - (153 * mp + 2) / 5 + 1;
    const long m = mp < 10 ? mp + 3 : mp - 9;
    if (m <= 2) ++y;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04ld-%02ld-%02ld", y, m, d);
    return buf;
}

constexpr long kEpoch2020 = 18262;  // 2020-01-01

}  // namespace detail

inline forecast::LoadHistory parse_history_csv(std::istream& in, const std::string& source,
                                               std::vector<std::string>* dates = nullptr) {
    const auto t = parse_csv(in, source);
    const auto cdate = t.column("date"), chour = t.column("hour"), cload = t.column("load_kwh"),
               ctemp = t.column("temp_c");

    struct Day {
        std::string date;
        forecast::Hours load{}, temp{};
        std::array<bool, forecast::kHours> seen{};
        bool has_load = false, missing_load = false;
        std::size_t first_line = 0;
    };
    std::vector<Day> days;
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = t.line_numbers[r];
        auto [it, inserted] = index.try_emplace(row[cdate], days.size());
        if (inserted) {
            days.push_back({});
            days.back().date = row[cdate];
            days.back().first_line = line;
        } else if (it->second + 1 != days.size()) {
            throw ParseError(source, line, "rows for date '" + row[cdate] + "' are not contiguous");
        }
        Day& day = days[it->second];
        const double hour = parse_number(row[chour], source, line, "hour");
        if (hour < 0 || hour >= static_cast<double>(forecast::kHours) || hour != std::floor(hour))
            throw ParseError(source, line, "hour must be an integer in [0, 23]");
        const auto h = static_cast<std::size_t>(hour);
        if (day.seen[h]) throw ParseError(source, line, "duplicate hour " + std::to_string(h) + " for " + day.date);
        day.seen[h] = true;
        day.temp[h] = parse_number(row[ctemp], source, line, "temp_c");
        if (row[cload].empty()) {
            day.missing_load = true;
        } else {
            day.load[h] = parse_number(row[cload], source, line, "load_kwh");
            if (!(day.load[h] >= 0.0)) throw ParseError(source, line, "load_kwh must be >= 0");
            day.has_load = true;
        }
    }
    if (days.empty()) throw SchemaError(source + ": no rows");

    forecast::LoadHistory h;
    for (std::size_t i = 0; i < days.size(); ++i) {
        const auto& d = days[i];
        if (std::find(d.seen.begin(), d.seen.end(), false) != d.seen.end())
            throw ParseError(source, d.first_line, "date '" + d.date + "' does not have all 24 hours");
        const bool last = i + 1 == days.size();
        if (d.missing_load && (d.has_load || !last))
            throw ParseError(source, d.first_line,
                             "date '" + d.date + "' has missing load_kwh (only allowed on the final, temperature-only date)");
        if (!d.missing_load) h.days.push_back({d.load, static_cast<long>(i)});
        double sum = 0.0;
        for (double v : d.temp) sum += v;
        h.daily_mean_temp.push_back(sum / static_cast<double>(forecast::kHours));
        h.hourly_temp.push_back(d.temp);
        if (dates) dates->push_back(d.date);
    }
    return h;
}

inline forecast::LoadHistory read_history_csv(const std::filesystem::path& path,
                                              std::vector<std::string>* dates = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse_history_csv(in, path.string(), dates);
}

/// Dates are day offsets from 2020-01-01.
inline std::string history_csv(const forecast::LoadHistory& h) {
    std::string s = "date,hour,load_kwh,temp_c\n";
    const std::size_t n_temp = h.daily_mean_temp.size();
    for (std::size_t d = 0; d < std::max(h.days.size(), n_temp); ++d) {
        const auto date = detail::iso_date(detail::kEpoch2020 + static_cast<long>(d));
        for (std::size_t hr = 0; hr < forecast::kHours; ++hr) {
            s += date + "," + std::to_string(hr) + ",";
            if (d < h.days.size()) s += format_number(h.days[d].hours[hr]);
            s += ",";
            s += d < n_temp ? format_number(h.hourly_temp[d][hr]) : std::string("nan");
            s += "\n";
        }
    }
    return s;
}

/// Every *.csv file in `dir`, in file-name order.
inline std::vector<forecast::LoadHistory> read_population_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw SchemaError(dir.string() + ": no customer CSV files");
    std::vector<forecast::LoadHistory> out;
    for (const auto& f : files) out.push_back(read_history_csv(f));
    return out;
}

inline std::string profile_csv(const forecast::DayForecast& f) {
    std::string s = "hour,load_kwh,shape\n";
    for (std::size_t h = 0; h < forecast::kHours; ++h)
        s += std::to_string(h) + "," + format_number(f.profile.hours[h]) + "," + format_number(f.shape.u[h]) + "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Models

inline json to_json(const forecast::ArxModel& m) {
    return json{{"kind", "total_arx"},
                {"order", m.order},
                {"lag_orientation", "most_recent_first"},
                {"lag", m.lag},
                {"exog", m.exog},
                {"intercept", m.intercept}};
}

inline json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto H = static_cast<Eigen::Index>(forecast::kHours);
    if (!j.is_array() || j.size() != forecast::kHours) throw SchemaError("model matrix must be 24x24");
    Eigen::MatrixXd m(H, H);
    for (Eigen::Index i = 0; i < H; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (!row.is_array() || row.size() != forecast::kHours) throw SchemaError("model matrix must be 24x24");
        for (Eigen::Index c = 0; c < H; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline json to_json(const forecast::VectorArxModel& m) {
    json lag = json::array(), exog = json::array();
    for (const auto& c : m.lag) lag.push_back(matrix_json(c));
    for (const auto& h : m.exog) exog.push_back(matrix_json(h));
    std::vector<double> icpt(m.intercept.data(), m.intercept.data() + m.intercept.size());
    return json{{"kind", "shape_varx"}, {"order", m.order}, {"lag_orientation", "most_recent_first"},
                {"lag", lag},          {"exog", exog},      {"intercept", icpt}};
}

inline void check_orientation(const json& j) {
    if (j.value("lag_orientation", std::string()) != "most_recent_first")
        throw SchemaError("model JSON: unsupported or missing lag_orientation");
}

inline forecast::ArxModel arx_from_json(const json& j) {
    try {
        check_orientation(j);
        forecast::ArxModel m;
        m.order = j.at("order").get<std::size_t>();
        m.lag = j.at("lag").get<std::vector<double>>();
        m.exog = j.at("exog").get<std::vector<double>>();
        m.intercept = j.at("intercept").get<double>();
        if (m.order == 0 || m.lag.size() != m.order || m.exog.size() != m.order + 1)
            throw SchemaError("total model JSON: coefficient counts do not match order");
        return m;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("total model JSON: ") + e.what());
    }
}

inline forecast::VectorArxModel varx_from_json(const json& j) {
    try {
        check_orientation(j);
        forecast::VectorArxModel m;
        m.order = j.at("order").get<std::size_t>();
        m.lag.clear();
        m.exog.clear();
        for (const auto& c : j.at("lag")) m.lag.push_back(matrix_from_json(c));
        for (const auto& h : j.at("exog")) m.exog.push_back(matrix_from_json(h));
        const auto icpt = j.at("intercept").get<std::vector<double>>();
        if (icpt.size() != forecast::kHours) throw SchemaError("shape model JSON: intercept must have 24 entries");
        m.intercept = Eigen::Map<const Eigen::VectorXd>(icpt.data(), static_cast<Eigen::Index>(icpt.size()));
        if (m.order == 0 || m.lag.size() != m.order || m.exog.size() != m.order + 1)
            throw SchemaError("shape model JSON: block counts do not match order");
        return m;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("shape model JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Scaling and residual outputs

inline std::string agg_curve_csv(std::span<const scaling::AggregationPoint> pts) {
    std::string s = "level,replicate,W_kwh,cv_pct\n";
    for (const auto& p : pts)
        s += std::to_string(p.n_customers) + "," + std::to_string(p.replicate) + "," + format_number(p.W) + "," +
             format_number(p.cv) + "\n";
    return s;
}

inline std::vector<scaling::AggregationPoint> parse_agg_curve_csv(std::istream& in, const std::string& source) {
    const auto t = parse_csv(in, source);
    const auto cl = t.column("level"), cr = t.column("replicate"), cw = t.column("W_kwh"), cc = t.column("cv_pct");
    std::vector<scaling::AggregationPoint> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto line = t.line_numbers[r];
        const auto& row = t.rows[r];
        out.push_back({parse_number(row[cw], source, line, "W_kwh"), parse_number(row[cc], source, line, "cv_pct"),
                       static_cast<std::size_t>(parse_number(row[cl], source, line, "level")),
                       static_cast<std::size_t>(parse_number(row[cr], source, line, "replicate"))});
    }
    return out;
}

inline json to_json(const scaling::ScalingLaw& law) {
    json j{{"beta0", law.beta0}, {"beta1", law.beta1}, {"p", law.p}, {"sse", law.sse},
           {"irreducible_pct", scaling::irreducible_error(law)}};
    j["w_star"] = law.beta1 > 0.0 ? json(scaling::critical_load(law)) : json(nullptr);
    return j;
}

inline std::string sweep_csv(const residuals::NormalitySweep& sweep) {
    std::string s = "level,n_customers,pass_fraction,mean_gamma\n";
    for (const auto& l : sweep.levels)
        s += std::to_string(l.level_index) + "," + std::to_string(l.n_customers) + "," +
             format_number(l.pass_fraction) + "," + format_number(l.mean_gamma) + "\n";
    return s;
}

inline json to_json(const residuals::ResidualReport& r) {
    json j{{"rho", r.rho}, {"gamma", r.gamma}, {"gamma_significant", r.gamma_significant}};
    if (r.normality) {
        j["sw_stat"] = r.normality->w;
        j["sw_p_value"] = r.normality->p_value;
        j["sw_pass"] = r.normality->pass;
    } else {
        j["sw_stat"] = nullptr;
        j["sw_p_value"] = nullptr;
        j["sw_pass"] = nullptr;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Synthetic population config

inline json to_json(const synth::SynthConfig& c) {
    const auto& t = c.temperature;
    return json{{"n_customers", c.n_customers},
                {"n_days", c.n_days},
                {"base_shape", std::vector<double>(c.base_shape.begin(), c.base_shape.end())},
                {"temperature",
                 {{"mean", t.mean},
                  {"seasonal_amplitude", t.seasonal_amplitude},
                  {"diurnal_amplitude", t.diurnal_amplitude},
                  {"daily_noise", t.daily_noise},
                  {"hourly_noise", t.hourly_noise}}},
                {"temp_response", c.temp_response},
                {"noise",
                 {{"kind", c.noise.kind == synth::NoiseKind::Gaussian ? "gaussian" : "exponential"},
                  {"scale", c.noise.scale},
                  {"common_scale", c.noise.common_scale},
                  {"ar_phi", c.noise.ar_phi}}},
                {"size", {{"kappa", c.size.kappa}, {"sigma", c.size.sigma}, {"theta", c.size.theta}}},
                {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline synth::SynthConfig synth_config_from_json(const json& j) {
    synth::SynthConfig c;
    try {
        c.n_customers = j.value("n_customers", c.n_customers);
        c.n_days = j.value("n_days", c.n_days);
        if (j.contains("base_shape")) {
            const auto b = j.at("base_shape").get<std::vector<double>>();
            if (b.size() != forecast::kHours) throw SchemaError("synth config: base_shape needs 24 weights");
            std::copy(b.begin(), b.end(), c.base_shape.begin());
        }
        if (j.contains("temperature")) {
            const auto& t = j.at("temperature");
            c.temperature.mean = t.value("mean", c.temperature.mean);
            c.temperature.seasonal_amplitude = t.value("seasonal_amplitude", c.temperature.seasonal_amplitude);
            c.temperature.diurnal_amplitude = t.value("diurnal_amplitude", c.temperature.diurnal_amplitude);
            c.temperature.daily_noise = t.value("daily_noise", c.temperature.daily_noise);
            c.temperature.hourly_noise = t.value("hourly_noise", c.temperature.hourly_noise);
        }
        c.temp_response = j.value("temp_response", c.temp_response);
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            const auto kind = n.value("kind", std::string("gaussian"));
            if (kind == "gaussian") c.noise.kind = synth::NoiseKind::Gaussian;
            else if (kind == "exponential") c.noise.kind = synth::NoiseKind::Exponential;
            else throw SchemaError("synth config: noise.kind must be gaussian or exponential");
            c.noise.scale = n.value("scale", c.noise.scale);
            c.noise.common_scale = n.value("common_scale", c.noise.common_scale);
            c.noise.ar_phi = n.value("ar_phi", c.noise.ar_phi);
        }
        if (j.contains("size")) {
            const auto& s = j.at("size");
            c.size.kappa = s.value("kappa", c.size.kappa);
            c.size.sigma = s.value("sigma", c.size.sigma);
            c.size.theta = s.value("theta", c.size.theta);
        }
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace feederstats::io
