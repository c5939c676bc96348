#include "stlcbf/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stlcbf {

using json = nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "\n") + s;
    return out;
}

// Collects every problem instead of stopping at the first one.
class Reader {
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
        if (!obj.is_object()) return;
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, _] : obj.items())
            if (!ok.count(k)) fail(join_path(path, k), "unknown key");
    }

    static std::string join_path(const std::string& base, const std::string& key) {
        return base.empty() ? key : base + "." + key;
    }

    double number(const json& obj, const std::string& path, const char* key, double def) {
        if (!obj.is_object() || !obj.contains(key)) return def;
        const json& v = obj.at(key);
        if (!v.is_number()) {
            fail(join_path(path, key), "expected a number");
            return def;
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(join_path(path, key), "must be finite");
        return d;
    }

    std::optional<double> optional_number(const json& obj, const std::string& path, const char* key) {
        if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
        return number(obj, path, key, 0.0);
    }

    std::vector<double> numbers(const json& v, const std::string& path) {
        std::vector<double> out;
        if (!v.is_array()) {
            fail(path, "expected an array of numbers");
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                fail(path + "[" + std::to_string(i) + "]", "expected a number");
                out.push_back(0.0);
            } else {
                out.push_back(v[i].get<double>());
            }
        }
        return out;
    }

    const json& section(const json& root, const char* key) {
        static const json empty = json::object();
        if (!root.contains(key)) return empty;
        const json& v = root.at(key);
        if (!v.is_object()) {
            fail(key, "expected an object");
            return empty;
        }
        return v;
    }

    void positive(double v, const std::string& path) {
        if (!(v > 0.0)) fail(path, "must be positive");
    }
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void read_vehicle(Reader& r, const json& root, ScenarioConfig& cfg) {
    const json& s = r.section(root, "vehicle");
    r.allow(s, "vehicle", {"mass", "c0", "c1", "c2", "time_headway", "standstill_gap", "a_max", "beta", "g"});
    auto& p = cfg.vehicle;
    p.mass = r.number(s, "vehicle", "mass", p.mass);
    p.c0 = r.number(s, "vehicle", "c0", p.c0);
    p.c1 = r.number(s, "vehicle", "c1", p.c1);
    p.c2 = r.number(s, "vehicle", "c2", p.c2);
    p.time_headway = r.number(s, "vehicle", "time_headway", p.time_headway);
    p.standstill_gap = r.number(s, "vehicle", "standstill_gap", p.standstill_gap);
    p.g_grav = r.number(s, "vehicle", "g", p.g_grav);
    p.a_max = r.number(s, "vehicle", "a_max", 0.4 * p.g_grav);
    p.beta = r.number(s, "vehicle", "beta", p.beta);
    for (const auto& v : p.violations()) r.errors.push_back("vehicle: " + v);
}

void read_box(Reader& r, const json& root, ScenarioConfig& cfg) {
    const json& s = r.section(root, "input_box");
    r.allow(s, "input_box", {"lower", "upper"});
    // an invalid vehicle is already reported; keep the default box well formed
    const double bound = std::abs(cfg.vehicle.mass * cfg.vehicle.a_max);
    double lo = -bound, hi = bound;
    if (s.contains("lower")) lo = r.number(s, "input_box", "lower", lo);
    if (s.contains("upper")) hi = r.number(s, "input_box", "upper", hi);
    if (!(lo <= hi)) {
        r.fail("input_box", "lower must not exceed upper");
        hi = lo;
    }
    cfg.input_box = InputBox::make(Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi));

    const json& d = r.section(root, "domain");
    r.allow(d, "domain", {"lower", "upper"});
    Eigen::Vector3d dlo(-1e4, 0.0, -1e4), dhi(1e6, 100.0, 1e6);
    for (const char* key : {"lower", "upper"}) {
        if (!d.contains(key)) continue;
        const auto v = r.numbers(d.at(key), std::string("domain.") + key);
        if (v.size() != 3) {
            r.fail(std::string("domain.") + key, "expected 3 entries (X_f, V_f, X_l)");
            continue;
        }
        (std::string(key) == "lower" ? dlo : dhi) = Eigen::Vector3d(v[0], v[1], v[2]);
    }
    cfg.domain = Box{dlo, dhi};
    if (cfg.domain.degenerate()) r.fail("domain", "lower must be below upper in every coordinate");
}

void read_initial(Reader& r, const json& root, ScenarioConfig& cfg) {
    // ego at rest at the origin, lead S0 + 50 m ahead
    const double gap = cfg.vehicle.standstill_gap + 50.0;
    if (!root.contains("initial_state")) {
        cfg.x0 = Eigen::Vector3d(0.0, 0.0, gap);
        return;
    }
    const json& s = root.at("initial_state");
    if (s.is_array()) {
        const auto v = r.numbers(s, "initial_state");
        if (v.size() != 3) r.fail("initial_state", "expected 3 entries (X_f, V_f, X_l)");
        cfg.x0 = v.size() == 3 ? Eigen::Vector3d(v[0], v[1], v[2]) : Eigen::Vector3d::Zero();
    } else {
        r.allow(s, "initial_state", {"X_f", "V_f", "X_l"});
        cfg.x0 = Eigen::Vector3d(r.number(s, "initial_state", "X_f", 0.0), r.number(s, "initial_state", "V_f", 0.0),
                                 r.number(s, "initial_state", "X_l", gap));
    }
    if (cfg.x0[vehicle::kVf] < 0.0) r.fail("initial_state.V_f", "must be non-negative");
    if (!(cfg.x0[vehicle::kXl] > cfg.x0[vehicle::kXf])) r.fail("initial_state.X_l", "lead must start ahead of ego");
    if (!cfg.domain.contains(cfg.x0)) r.fail("initial_state", "outside the state domain");
}

void read_lead(Reader& r, const json& root, ScenarioConfig& cfg) {
    const json& s = r.section(root, "lead");
    r.allow(s, "lead", {"v0", "accel"});
    cfg.lead.v0 = r.number(s, "lead", "v0", cfg.x0.size() == 3 ? cfg.x0[vehicle::kVf] : 0.0);
    if (cfg.lead.v0 < 0.0) r.fail("lead.v0", "must be non-negative");
    if (!s.contains("accel")) return;
    const json& steps = s.at("accel");
    if (!steps.is_array()) {
        r.fail("lead.accel", "expected an array of [time, acceleration] pairs");
        return;
    }
    double prev = -1.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::string path = "lead.accel[" + std::to_string(i) + "]";
        const auto v = r.numbers(steps[i], path);
        if (v.size() != 2) {
            r.fail(path, "expected [time, acceleration]");
            continue;
        }
        if (!(v[0] > prev) || v[0] < 0.0) r.fail(path, "times must be non-negative and increasing");
        prev = v[0];
        cfg.lead.accel_steps.emplace_back(v[0], v[1]);
    }
}

void read_speed_limits(Reader& r, const json& root, ScenarioConfig& cfg) {
    if (!root.contains("speed_limits")) return;
    const json& s = r.section(root, "speed_limits");
    r.allow(s, "speed_limits", {"period", "values", "intervals"});
    try {
        if (s.contains("intervals")) {
            std::vector<std::pair<TimeInterval, double>> pieces;
            const json& iv = s.at("intervals");
            if (!iv.is_array()) throw InvalidArgument("expected an array of [start, end, limit]");
            for (std::size_t i = 0; i < iv.size(); ++i) {
                const auto v = r.numbers(iv[i], "speed_limits.intervals[" + std::to_string(i) + "]");
                if (v.size() != 3) throw InvalidArgument("interval " + std::to_string(i) + ": expected [start, end, limit]");
                pieces.emplace_back(TimeInterval::make(v[0], v[1]), v[2]);
            }
            cfg.speed_limits = vehicle::SpeedLimitSchedule::make(std::move(pieces));
        } else {
            const double period = r.number(s, "speed_limits", "period", 0.0);
            const auto values = s.contains("values") ? r.numbers(s.at("values"), "speed_limits.values")
                                                     : std::vector<double>{};
            cfg.speed_limits = vehicle::SpeedLimitSchedule::periodic(period, values, cfg.horizon);
        }
    } catch (const std::exception& e) {
        r.fail("speed_limits", e.what());
    }
}

void read_signals(Reader& r, const json& root, ScenarioConfig& cfg) {
    if (!root.contains("signals")) return;
    const json& s = r.section(root, "signals");
    r.allow(s, "signals", {"generate", "list"});
    if (s.contains("generate")) {
        const json& g = s.at("generate");
        const std::string p = "signals.generate";
        r.allow(g, p,
                {"count", "first_min", "first_max", "spacing_min", "spacing_max", "green_min", "green_max",
                 "yellow_min", "yellow_max", "red_min", "red_max"});
        vehicle::SignalGeneratorSettings st;
        st.count = static_cast<int>(r.number(g, p, "count", st.count));
        st.first_min = r.number(g, p, "first_min", st.first_min);
        st.first_max = r.number(g, p, "first_max", st.first_max);
        st.spacing_min = r.number(g, p, "spacing_min", st.spacing_min);
        st.spacing_max = r.number(g, p, "spacing_max", st.spacing_max);
        st.green_min = r.number(g, p, "green_min", st.green_min);
        st.green_max = r.number(g, p, "green_max", st.green_max);
        st.yellow_min = r.number(g, p, "yellow_min", st.yellow_min);
        st.yellow_max = r.number(g, p, "yellow_max", st.yellow_max);
        st.red_min = r.number(g, p, "red_min", st.red_min);
        st.red_max = r.number(g, p, "red_max", st.red_max);
        if (st.count < 1) r.fail(p + ".count", "must be at least 1");
        if (!(st.spacing_min > 0.0 && st.spacing_min <= st.spacing_max)) r.fail(p + ".spacing_min", "invalid range");
        if (!(st.yellow_min > 0.0 && st.yellow_min <= st.yellow_max)) r.fail(p + ".yellow_min", "invalid range");
        if (!(st.green_min > 0.0 && st.green_min <= st.green_max)) r.fail(p + ".green_min", "invalid range");
        if (!(st.red_min > 0.0 && st.red_min <= st.red_max)) r.fail(p + ".red_min", "invalid range");
        cfg.signals = st;
        return;
    }
    if (!s.contains("list") || !s.at("list").is_array()) {
        r.fail("signals", "expected 'generate' or a 'list' array");
        return;
    }
    std::vector<vehicle::TrafficSignal> list;
    const json& arr = s.at("list");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "signals.list[" + std::to_string(i) + "]";
        const json& e = arr[i];
        r.allow(e, p, {"position", "cycles", "offset", "green", "yellow", "red"});
        const double pos = r.number(e, p, "position", 0.0);
        try {
            if (e.contains("cycles")) {
                vehicle::TrafficSignal sig{pos, {}};
                for (std::size_t j = 0; j < e.at("cycles").size(); ++j) {
                    const auto v = r.numbers(e.at("cycles")[j], p + ".cycles[" + std::to_string(j) + "]");
                    if (v.size() != 3) throw InvalidArgument("cycles need [green, yellow, red] instants");
                    sig.cycles.push_back({v[0], v[1], v[2]});
                }
                list.push_back(std::move(sig));
            } else {
                list.push_back(vehicle::SignalSchedule::periodic(
                    pos, r.number(e, p, "offset", 0.0), r.number(e, p, "green", 0.0), r.number(e, p, "yellow", 0.0),
                    r.number(e, p, "red", 0.0), cfg.horizon));
            }
        } catch (const std::exception& ex) {
            r.fail(p, ex.what());
        }
    }
    try {
        (void)vehicle::SignalSchedule::make(list);
        cfg.signals = std::move(list);
    } catch (const std::exception& ex) {
        r.fail("signals", ex.what());
    }
}

void read_barriers(Reader& r, const json& root, ScenarioConfig& cfg) {
    if (!root.contains("barriers")) return;
    const json& arr = root.at("barriers");
    if (!arr.is_array()) {
        r.fail("barriers", "expected an array");
        return;
    }
    static const std::set<std::string> reserved{"h1", "h_v", "h_pos"};
    std::set<std::string> seen;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "barriers[" + std::to_string(i) + "]";
        const json& e = arr[i];
        r.allow(e, p,
                {"id", "template", "coeffs", "offset", "switch_times", "offsets", "v_max", "alpha", "rho", "t_conv",
                 "gamma"});
        BarrierDecl d;
        if (!e.contains("id") || !e.at("id").is_string()) {
            r.fail(p + ".id", "required string");
            continue;
        }
        d.id = e.at("id").get<std::string>();
        if (reserved.count(d.id) || (d.id.size() > 1 && d.id[0] == 'v' &&
                                     d.id.find_first_not_of("0123456789", 1) == std::string::npos))
            r.fail(p + ".id", "'" + d.id + "' is reserved for built-in barriers");
        if (!seen.insert(d.id).second) r.fail(p + ".id", "duplicate id '" + d.id + "'");
        const std::string tmpl = e.value("template", std::string("affine"));
        d.alpha = r.number(e, p, "alpha", 1.0);
        r.positive(d.alpha, p + ".alpha");
        d.convergence.rho = r.number(e, p, "rho", d.convergence.rho);
        d.convergence.t_conv = r.number(e, p, "t_conv", d.convergence.t_conv);
        d.convergence.gamma = r.optional_number(e, p, "gamma");
        if (!(d.convergence.rho >= 0.0 && d.convergence.rho < 1.0)) r.fail(p + ".rho", "must lie in [0, 1)");
        r.positive(d.convergence.t_conv, p + ".t_conv");
        if (d.convergence.gamma) r.positive(*d.convergence.gamma, p + ".gamma");

        if (tmpl == "constant") {
            d.kind = "constant";
        } else if (tmpl == "speed_limit") {
            d.kind = "affine";
            d.coeffs = Eigen::Vector3d(0.0, -1.0, 0.0);
            d.offsets = {r.number(e, p, "v_max", 0.0)};
            r.positive(d.offsets[0], p + ".v_max");
            if (!e.contains("alpha")) d.alpha = 1.0 / cfg.vehicle.beta;
        } else if (tmpl == "affine") {
            d.kind = "affine";
            const auto c = e.contains("coeffs") ? r.numbers(e.at("coeffs"), p + ".coeffs") : std::vector<double>{};
            if (c.size() != 3) r.fail(p + ".coeffs", "expected 3 entries (X_f, V_f, X_l)");
            d.coeffs = c.size() == 3 ? to_vector(c) : Eigen::VectorXd(Eigen::Vector3d::Zero());
            if (e.contains("offsets")) {
                d.offsets = r.numbers(e.at("offsets"), p + ".offsets");
                d.switch_times = e.contains("switch_times") ? r.numbers(e.at("switch_times"), p + ".switch_times")
                                                            : std::vector<double>{};
                if (d.offsets.size() != d.switch_times.size() + 1)
                    r.fail(p + ".offsets", "needs one more entry than switch_times");
            } else {
                d.offsets = {r.number(e, p, "offset", 0.0)};
            }
        } else {
            r.fail(p + ".template", "unknown template '" + tmpl + "'");
            continue;
        }
        cfg.barriers.push_back(std::move(d));
    }
}

void read_misc(Reader& r, const json& root, ScenarioConfig& cfg) {
    const json& f = r.section(root, "fcbf");
    r.allow(f, "fcbf", {"rho_signal", "rho_speed", "t_conv_speed", "gamma_speed"});
    cfg.fcbf.rho_signal = r.number(f, "fcbf", "rho_signal", cfg.fcbf.rho_signal);
    cfg.fcbf.rho_speed = r.number(f, "fcbf", "rho_speed", cfg.fcbf.rho_speed);
    cfg.fcbf.t_conv_speed = r.number(f, "fcbf", "t_conv_speed", cfg.fcbf.t_conv_speed);
    cfg.fcbf.gamma_speed = r.optional_number(f, "fcbf", "gamma_speed");
    for (auto [v, name] : {std::pair{cfg.fcbf.rho_signal, "fcbf.rho_signal"}, {cfg.fcbf.rho_speed, "fcbf.rho_speed"}})
        if (!(v >= 0.0 && v < 1.0)) r.fail(name, "must lie in [0, 1)");
    r.positive(cfg.fcbf.t_conv_speed, "fcbf.t_conv_speed");
    if (cfg.fcbf.gamma_speed) r.positive(*cfg.fcbf.gamma_speed, "fcbf.gamma_speed");

    const json& p = r.section(root, "pid");
    r.allow(p, "pid", {"k1", "k2", "k3", "integral_limit"});
    cfg.pid.k1 = r.number(p, "pid", "k1", cfg.pid.k1);
    cfg.pid.k2 = r.number(p, "pid", "k2", cfg.pid.k2);
    cfg.pid.k3 = r.number(p, "pid", "k3", cfg.pid.k3);
    cfg.pid.integral_limit = r.number(p, "pid", "integral_limit", cfg.pid.integral_limit);
    if (cfg.pid.integral_limit < 0.0) r.fail("pid.integral_limit", "must be non-negative");

    const json& t = r.section(root, "tolerances");
    r.allow(t, "tolerances", {"monitor", "initial_set", "grid_points", "step_margin", "gamma_min"});
    auto& tol = cfg.tolerances;
    tol.monitor = r.number(t, "tolerances", "monitor", tol.monitor);
    tol.initial_set = r.number(t, "tolerances", "initial_set", tol.initial_set);
    tol.grid_points = static_cast<int>(r.number(t, "tolerances", "grid_points", tol.grid_points));
    tol.step_margin = r.number(t, "tolerances", "step_margin", tol.step_margin);
    tol.gamma_min = r.number(t, "tolerances", "gamma_min", tol.gamma_min);
    if (tol.monitor < 0.0) r.fail("tolerances.monitor", "must be non-negative");
    if (tol.initial_set < 0.0) r.fail("tolerances.initial_set", "must be non-negative");
    if (tol.grid_points < 2) r.fail("tolerances.grid_points", "must be at least 2");
    if (tol.step_margin < 0.0) r.fail("tolerances.step_margin", "must be non-negative");
    r.positive(tol.gamma_min, "tolerances.gamma_min");
}

void read_spec(Reader& r, const json& root, ScenarioConfig& cfg) {
    const bool inline_spec = root.contains("spec");
    const bool file_spec = root.contains("spec_file");
    if (inline_spec && file_spec) r.fail("spec", "give either 'spec' or 'spec_file', not both");
    if (inline_spec) {
        const json& s = root.at("spec");
        if (s.is_string()) {
            cfg.spec_text = s.get<std::string>();
        } else if (s.is_array()) {
            for (const auto& line : s) {
                if (!line.is_string()) {
                    r.fail("spec", "lines must be strings");
                    continue;
                }
                cfg.spec_text += line.get<std::string>() + "\n";
            }
        } else {
            r.fail("spec", "expected a string or an array of lines");
        }
    } else if (file_spec) {
        if (!root.at("spec_file").is_string()) {
            r.fail("spec_file", "expected a path");
            return;
        }
        std::filesystem::path p = root.at("spec_file").get<std::string>();
        if (p.is_relative()) p = cfg.base_dir / p;
        std::ifstream in(p);
        if (!in) {
            r.fail("spec_file", "cannot read '" + p.string() + "'");
            return;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        cfg.spec_text = ss.str();
    } else {
        cfg.spec_text = default_spec(cfg);
    }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid config:\n" + join(problems)), problems_(std::move(problems)) {}

ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("parse error: ") + e.what()});
    }
    if (!root.is_object()) throw ConfigError({"top level must be an object"});

    Reader r;
    r.allow(root, "",
            {"name", "vehicle", "input_box", "domain", "initial_state", "lead", "speed_limits", "signals", "barriers",
             "fcbf", "pid", "tolerances", "spec", "spec_file", "dt", "horizon", "seed"});
    ScenarioConfig cfg;
    cfg.base_dir = base_dir;
    cfg.name = root.value("name", std::string("scenario"));
    cfg.dt = r.number(root, "", "dt", 0.01);
    r.positive(cfg.dt, "dt");
    if (!root.contains("horizon")) r.fail("horizon", "required");
    cfg.horizon = r.number(root, "", "horizon", 0.0);
    r.positive(cfg.horizon, "horizon");
    if (root.contains("seed")) {
        if (root.at("seed").is_number_unsigned())
            cfg.seed = root.at("seed").get<std::uint64_t>();
        else
            r.fail("seed", "expected a non-negative integer");
    }

    read_vehicle(r, root, cfg);
    read_box(r, root, cfg);
    read_initial(r, root, cfg);
    read_lead(r, root, cfg);
    if (cfg.horizon > 0.0) {
        read_speed_limits(r, root, cfg);
        read_signals(r, root, cfg);
    }
    read_barriers(r, root, cfg);
    read_misc(r, root, cfg);
    if (r.errors.empty()) read_spec(r, root, cfg);

    if (!r.errors.empty()) throw ConfigError(std::move(r.errors));
    cfg.canonical = root.dump();
    return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config '" + path.string() + "'"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string default_spec(const ScenarioConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "horizon " << cfg.horizon << "\n";
    out << "G[0," << cfg.horizon << ") sat(h1)\n";
    if (!std::holds_alternative<std::monostate>(cfg.signals)) out << "G[0," << cfg.horizon << ") sat(h_pos)\n";
    if (cfg.speed_limits) {
        const auto& pieces = cfg.speed_limits->pieces();
        for (std::size_t i = 0; i < pieces.size(); ++i)
            out << "G[" << pieces[i].first.start << "," << pieces[i].first.end << ") sat(v" << i + 1 << ")\n";
    }
    return out.str();
}

}  // namespace stlcbf
