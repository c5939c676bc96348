#include "stlcbf/pipeline.hpp"

#include "log.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace stlcbf {

namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    // avoid "-0.000000"
    if (std::string_view(buf) == "-0.000000") return "0.000000";
    return buf;
}

std::string short_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// The always-true predicate under a user-chosen id.
class NamedTrue final : public Barrier {
public:
    explicit NamedTrue(std::string id) : Barrier(std::move(id), 3) {}
    double value(double, const State&) const override { return 1.0; }
    double dh_dt(double, const State&) const override { return 0.0; }
    Eigen::VectorXd grad_x(double, const State&) const override { return Eigen::Vector3d::Zero(); }
    std::optional<AffineForm> affine(double) const override { return AffineForm{Eigen::Vector3d::Zero(), 1.0}; }
    bool vacuous() const override { return true; }
};

}  // namespace

// ---------------------------------------------------------------- scenario

Scenario build_scenario(const ScenarioConfig& cfg) {
    using namespace vehicle;
    Scenario sc;
    sc.cfg = cfg;
    const VehicleParams& p = cfg.vehicle;
    try {
        sc.lead = std::make_shared<LeadProfile>(cfg.x0[kXl], cfg.lead.v0, cfg.lead.accel_steps);
        sc.sys = std::make_shared<VehicleSystem>(p, sc.lead, cfg.domain);
        sc.h1 = std::make_shared<SpacingBarrier>("h1", p, sc.lead);
        sc.registry.add({sc.h1, AlphaFn::identity(), {}});

        const AlphaFn speed_alpha = AlphaFn::scaled(1.0 / p.beta);
        const ConvergenceSettings speed_conv{cfg.fcbf.rho_speed, cfg.fcbf.t_conv_speed, cfg.fcbf.gamma_speed};
        if (cfg.speed_limits) {
            sc.limits = std::make_shared<SpeedLimitSchedule>(*cfg.speed_limits);
            sc.h_v = speed_limit_barrier("h_v", *sc.limits);
            sc.registry.add({sc.h_v, speed_alpha, speed_conv});
            const auto& pieces = sc.limits->pieces();
            for (std::size_t i = 0; i < pieces.size(); ++i)
                sc.registry.add({speed_limit_barrier("v" + std::to_string(i + 1), pieces[i].second), speed_alpha,
                                 speed_conv});
        }

        if (const auto* list = std::get_if<std::vector<TrafficSignal>>(&cfg.signals)) {
            sc.signals = std::make_shared<SignalSchedule>(SignalSchedule::make(*list));
        } else if (const auto* gen = std::get_if<SignalGeneratorSettings>(&cfg.signals)) {
            sc.signals = std::make_shared<SignalSchedule>(SignalSchedule::generate(cfg.seed, *gen, cfg.horizon));
        }
        if (sc.signals) {
            sc.h_pos = std::make_shared<SignalBarrier>("h_pos", sc.signals, p, cfg.fcbf.rho_signal);
            sc.registry.add({sc.h_pos, AlphaFn::identity(), {}});
        }

        for (const auto& d : cfg.barriers) {
            BarrierPtr b;
            if (d.kind == "constant")
                b = std::make_shared<NamedTrue>(d.id);
            else if (d.offsets.size() == 1)
                b = std::make_shared<AffineBarrier>(d.id, d.coeffs, d.offsets[0]);
            else
                b = std::make_shared<AffineBarrier>(d.id, d.coeffs, d.switch_times, d.offsets);
            sc.registry.add({b, AlphaFn::scaled(d.alpha), d.convergence});
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError({e.what()});
    }
    sc.annotator = make_annotator(sc.lead, sc.h1, sc.h_v, sc.h_pos, sc.limits);
    return sc;
}

// ---------------------------------------------------------------- enums

const char* to_string(Stage s) {
    switch (s) {
        case Stage::Config: return "config";
        case Stage::Parse: return "parse";
        case Stage::Preprocess: return "preprocess";
        case Stage::Group: return "group";
        case Stage::Schedule: return "schedule";
        case Stage::Simulate: return "simulate";
        case Stage::Monitor: return "monitor";
        case Stage::Done: return "done";
    }
    return "?";
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Success: return "success";
        case Outcome::ConfigError: return "config_error";
        case Outcome::StaticIncompatible: return "static_incompatible";
        case Outcome::RuntimeInfeasible: return "runtime_infeasible";
        case Outcome::MonitorViolation: return "monitor_violation";
        case Outcome::InternalError: return "internal_error";
    }
    return "?";
}

int exit_code(Outcome o) {
    switch (o) {
        case Outcome::Success: return 0;
        case Outcome::InternalError: return 1;
        case Outcome::StaticIncompatible: return 2;
        case Outcome::RuntimeInfeasible: return 3;
        case Outcome::ConfigError: return 4;
        case Outcome::MonitorViolation: return 5;
    }
    return 1;
}

std::string config_hash(const ScenarioConfig& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    feed(cfg.canonical);
    feed("|dt=" + short_num(cfg.dt) + "|seed=" + std::to_string(cfg.seed));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

// ---------------------------------------------------------------- pipeline

namespace {

RunStats summarize(const Trace& tr, const Scenario& sc) {
    RunStats st;
    st.steps = tr.rows.empty() ? 0 : tr.rows.size() - 1;
    const double inf = std::numeric_limits<double>::infinity();
    st.min_h1 = st.min_h_v = st.min_h_pos = inf;
    const auto c_h1 = tr.channel_index("h1");
    const auto c_hv = tr.channel_index("h_v");
    const auto c_hp = tr.channel_index("h_pos");
    for (const auto& r : tr.rows) {
        if (r.qp_status == QpStatus::Nominal) ++st.qp_nominal;
        if (r.qp_status == QpStatus::Modified) ++st.qp_modified;
        auto take = [&](std::optional<std::size_t> c, double& m) {
            if (c && *c < r.channels.size() && !std::isnan(r.channels[*c])) m = std::min(m, r.channels[*c]);
        };
        take(c_h1, st.min_h1);
        take(c_hv, st.min_h_v);
        take(c_hp, st.min_h_pos);
    }
    st.max_speed_excess = c_hv ? -st.min_h_v : 0.0;
    st.sanitized = tr.events.size();
    if (sc.signals) st.red_crossings = vehicle::red_crossings(tr, *sc.signals).size();
    return st;
}

void monitor_into(RunReport& rep, const Trace& tr, const StlSpec& spec, double tol) {
    rep.stage = Stage::Monitor;
    rep.monitor = monitor_trace(tr, spec, tol);
    if (!rep.monitor->satisfied()) {
        rep.outcome = Outcome::MonitorViolation;
        for (const auto& e : rep.monitor->entries)
            if (!e.satisfied) {
                rep.message = e.formula + " violated (margin " + short_num(e.margin) + " at t=" +
                              short_num(e.time) + ")";
                break;
            }
    } else {
        rep.outcome = Outcome::Success;
        rep.stage = Stage::Done;
    }
}

}  // namespace

PipelineResult run_pipeline(const ScenarioConfig& base, const PipelineOptions& opts) {
    PipelineResult res;
    RunReport& rep = res.report;
    ScenarioConfig cfg = base;
    if (opts.dt) cfg.dt = *opts.dt;
    if (opts.seed) cfg.seed = *opts.seed;
    rep.scenario = cfg.name;
    rep.dt = cfg.dt;
    rep.horizon = cfg.horizon;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash(cfg);

    auto fail = [&](Outcome o, Stage s, const std::string& msg) {
        rep.outcome = o;
        rep.stage = s;
        rep.message = std::string("stage=") + to_string(s) + ": " + msg;
        detail::log().error("{}", rep.message);
    };

    if (!(cfg.dt > 0.0)) {
        fail(Outcome::ConfigError, Stage::Config, "dt must be positive");
        return res;
    }

    Scenario sc;
    try {
        sc = build_scenario(cfg);
    } catch (const std::exception& e) {
        fail(Outcome::ConfigError, Stage::Config, e.what());
        return res;
    }

    StlSpec spec;
    try {
        spec = parse_spec(cfg.spec_text, sc.registry);
    } catch (const std::exception& e) {
        fail(Outcome::ConfigError, Stage::Parse, e.what());
        return res;
    }
    if (spec.horizon > cfg.horizon + 1e-12) {
        fail(Outcome::ConfigError, Stage::Parse,
             "spec horizon " + short_num(spec.horizon) + " exceeds simulation horizon " + short_num(cfg.horizon));
        return res;
    }

    StlSpec pre;
    try {
        pre = eventually_to_globally(spec);
    } catch (const std::exception& e) {
        fail(Outcome::ConfigError, Stage::Preprocess, e.what());
        return res;
    }

    try {
        rep.groups = group_tasks(pre);
    } catch (const std::exception& e) {
        fail(Outcome::InternalError, Stage::Group, e.what());
        return res;
    }
    detail::log().info("{} task group(s)", rep.groups.size());

    std::vector<ContractSchedule> schedules;
    ScheduleConfig scfg{cfg.domain, cfg.horizon, cfg.tolerances.grid_points, cfg.tolerances.step_margin,
                        cfg.tolerances.gamma_min};
    try {
        for (const auto& g : rep.groups) {
            BuildResult b = build_schedule(g, scfg);
            rep.compatibility.push_back(b.report);
            if (!b.ok() && rep.outcome == Outcome::Success) {
                const BoundaryReport* f = b.report.first_failure();
                fail(Outcome::StaticIncompatible, Stage::Schedule,
                     "group " + g.label + " incompatible at t=" + short_num(f->time) + " boundary " + f->prev_id +
                         " -> " + f->next_id + ": " + f->reason);
            }
            schedules.push_back(std::move(b.schedule));
        }
    } catch (const std::exception& e) {
        fail(Outcome::InternalError, Stage::Schedule, e.what());
        return res;
    }
    if (rep.outcome != Outcome::Success || opts.check_only) {
        if (opts.check_only && rep.outcome == Outcome::Success) rep.stage = Stage::Done;
        return res;
    }

    const auto& p = cfg.vehicle;
    PidState pid{cfg.pid, 0.0};
    auto lead = sc.lead;
    auto h1 = sc.h1;
    NominalController nominal = [&pid, lead, h1, p](double t, const State& x, double dt) {
        const double e = h1->value(t, x);
        const double vr = lead->velocity(t) - x[vehicle::kVf];
        return Input::Constant(
            1, pid_nominal(e, vr, pid, dt, p.mass, vehicle::friction_force(x[vehicle::kVf], p)));
    };
    SimConfig sim{cfg.dt, cfg.horizon, cfg.input_box, cfg.tolerances.initial_set};

    SimResult sr;
    try {
        sr = run_simulation(*sc.sys, schedules, nominal, sim, cfg.x0, &sc.annotator);
    } catch (const std::exception& e) {
        fail(Outcome::InternalError, Stage::Simulate, e.what());
        return res;
    }
    res.trace = std::move(sr.trace);
    res.trace.scenario_hash = rep.config_hash;
    rep.engagements = res.trace.engagements;
    rep.events = res.trace.events;
    rep.stats = summarize(res.trace, sc);

    if (sr.failure) {
        rep.failure = sr.failure;
        const Outcome o = sr.failure->kind == FailureKind::InitialCondition ? Outcome::StaticIncompatible
                                                                            : Outcome::RuntimeInfeasible;
        fail(o, Stage::Simulate,
             std::string(to_string(sr.failure->kind)) + " at t=" + short_num(sr.failure->time) + ": " +
                 sr.failure->reason);
        return res;
    }

    try {
        monitor_into(rep, res.trace, spec, cfg.tolerances.monitor);
    } catch (const std::exception& e) {
        fail(Outcome::InternalError, Stage::Monitor, e.what());
    }
    if (rep.outcome == Outcome::MonitorViolation) rep.message = "stage=monitor: " + rep.message;
    return res;
}

RunReport monitor_recorded(const Trace& trace, const ScenarioConfig& cfg) {
    RunReport rep;
    rep.scenario = cfg.name;
    rep.dt = trace.dt;
    rep.horizon = cfg.horizon;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash(cfg);
    try {
        const Scenario sc = build_scenario(cfg);
        const StlSpec spec = parse_spec(cfg.spec_text, sc.registry);
        rep.stats = summarize(trace, sc);
        monitor_into(rep, trace, spec, cfg.tolerances.monitor);
    } catch (const ConfigError& e) {
        rep.outcome = Outcome::ConfigError;
        rep.stage = Stage::Config;
        rep.message = e.what();
    } catch (const SpecParseError& e) {
        rep.outcome = Outcome::ConfigError;
        rep.stage = Stage::Parse;
        rep.message = e.what();
    } catch (const std::exception& e) {
        rep.outcome = Outcome::InternalError;
        rep.stage = Stage::Monitor;
        rep.message = e.what();
    }
    return rep;
}

// ---------------------------------------------------------------- trace csv

namespace {

const std::vector<std::string> kStateCols{"X_f", "V_f", "X_l"};
const std::vector<std::string> kChannelCols{"V_l", "V_max", "h1", "h_v", "h_pos", "active_signal", "signal_phase"};

}  // namespace

void write_trace_csv(const Trace& trace, std::ostream& out) {
    if (trace.state_names != kStateCols || trace.channel_names != kChannelCols)
        throw InvalidArgument("trace does not have the vehicle column layout");
    out << "t,X_f,V_f,X_l,V_l,V_max,u_nom,u_safe,h1,h_v,h_pos,qp_status,active_signal,signal_phase\n";
    for (const auto& r : trace.rows) {
        const auto& c = r.channels;
        out << fixed(r.t) << ',' << fixed(r.x[0]) << ',' << fixed(r.x[1]) << ',' << fixed(r.x[2]) << ','
            << fixed(c[0]) << ',' << fixed(c[1]) << ',' << fixed(r.u_nom[0]) << ',' << fixed(r.u_safe[0]) << ','
            << fixed(c[2]) << ',' << fixed(c[3]) << ',' << fixed(c[4]) << ',' << static_cast<int>(r.qp_status)
            << ',' << static_cast<int>(c[5]) << ',' << static_cast<int>(c[6]) << '\n';
    }
}

void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace '" + path.string() + "'");
    write_trace_csv(trace, out);
    if (!out) throw std::runtime_error("I/O error writing '" + path.string() + "'");
}

Trace read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("trace csv: empty input");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InvalidArgument("trace csv: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ct = col("t"), cun = col("u_nom"), cus = col("u_safe"), cq = col("qp_status");
    std::vector<std::size_t> cs, cc;
    for (const auto& n : kStateCols) cs.push_back(col(n));
    for (const auto& n : kChannelCols) cc.push_back(col(n));

    Trace tr;
    tr.state_names = kStateCols;
    tr.channel_names = kChannelCols;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double d = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw InvalidArgument("trace csv: bad number on line " + std::to_string(lineno));
            v.push_back(d);
        }
        if (v.size() != header.size())
            throw InvalidArgument("trace csv: wrong column count on line " + std::to_string(lineno));
        TraceRow r;
        r.t = v[ct];
        r.x = State(3);
        for (std::size_t i = 0; i < 3; ++i) r.x[static_cast<Eigen::Index>(i)] = v[cs[i]];
        r.u_nom = Input::Constant(1, v[cun]);
        r.u_safe = Input::Constant(1, v[cus]);
        r.qp_status = static_cast<QpStatus>(static_cast<int>(v[cq]));
        for (std::size_t i : cc) r.channels.push_back(v[i]);
        tr.rows.push_back(std::move(r));
    }
    if (tr.rows.size() >= 2) tr.dt = tr.rows[1].t - tr.rows[0].t;
    return tr;
}

Trace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read trace '" + path.string() + "'");
    return read_trace_csv(in);
}

// ---------------------------------------------------------------- report

void write_report(const RunReport& r, std::ostream& out) {
    out << "status=" << (r.success() ? "success" : "failure") << '\n';
    out << "outcome=" << to_string(r.outcome) << '\n';
    out << "exit_code=" << exit_code(r.outcome) << '\n';
    out << "stage=" << to_string(r.stage) << '\n';
    if (!r.message.empty()) {
        std::string m = r.message;
        std::replace(m.begin(), m.end(), '\n', ' ');
        out << "message=" << m << '\n';
    }
    out << "scenario=" << r.scenario << '\n';
    out << "config_hash=" << r.config_hash << '\n';
    out << "dt=" << fixed(r.dt) << '\n';
    out << "horizon=" << fixed(r.horizon) << '\n';
    out << "seed=" << r.seed << '\n';

    out << "groups=" << r.groups.size() << '\n';
    for (const auto& g : r.groups) {
        out << "group." << g.label << ".predicates=";
        for (std::size_t i = 0; i < g.predicates.size(); ++i) {
            const auto& [iv, pred] = g.predicates[i];
            out << (i ? " " : "") << pred.label() << "@[" << short_num(iv.start) << "," << short_num(iv.end) << ")";
        }
        out << '\n';
    }
    for (const auto& c : r.compatibility) {
        out << "compat." << c.group << ".compatible=" << (c.compatible() ? "true" : "false") << '\n';
        for (std::size_t i = 0; i < c.boundaries.size(); ++i) {
            const auto& b = c.boundaries[i];
            out << "compat." << c.group << ".boundary." << i << "=t=" << fixed(b.time) << " prev=" << b.prev_id
                << " next=" << b.next_id << " verdict=" << to_string(b.verdict) << " method=" << to_string(b.method);
            if (b.method == CheckMethod::Sampled) out << " resolution=" << b.resolution;
            if (b.verdict == Verdict::OverlapWithDeadline || b.window > 0.0)
                out << " engage=" << fixed(b.engage_time) << " window=" << fixed(b.window)
                    << " worst_margin=" << fixed(b.worst_engage_margin) << " bound=" << fixed(b.bound);
            if (!b.reason.empty()) out << " reason=\"" << b.reason << "\"";
            out << '\n';
        }
    }
    if (r.failure) {
        out << "failure.kind=" << to_string(r.failure->kind) << '\n';
        out << "failure.time=" << fixed(r.failure->time) << '\n';
        out << "failure.reason=" << r.failure->reason << '\n';
        for (std::size_t i = 0; i < r.failure->constraints.size(); ++i) {
            const auto& c = r.failure->constraints[i];
            out << "failure.constraint." << i << "=" << c.origin << " a=";
            for (Eigen::Index j = 0; j < c.a.size(); ++j) out << (j ? "," : "") << fixed(c.a[j]);
            out << " b=" << fixed(c.b) << '\n';
        }
    }
    if (r.monitor) {
        out << "monitor.satisfied=" << (r.monitor->satisfied() ? "true" : "false") << '\n';
        for (std::size_t i = 0; i < r.monitor->entries.size(); ++i) {
            const auto& e = r.monitor->entries[i];
            out << "monitor." << i << "=" << e.formula << " satisfied=" << (e.satisfied ? "true" : "false")
                << " margin=" << fixed(e.margin) << " t=" << fixed(e.time) << '\n';
        }
    }
    if (r.stats) {
        const auto& s = *r.stats;
        out << "stats.steps=" << s.steps << '\n';
        out << "stats.qp_nominal=" << s.qp_nominal << '\n';
        out << "stats.qp_modified=" << s.qp_modified << '\n';
        out << "stats.clamp_events=" << s.sanitized << '\n';
        out << "stats.min_h1=" << fixed(s.min_h1) << '\n';
        out << "stats.min_h_v=" << fixed(s.min_h_v) << '\n';
        out << "stats.min_h_pos=" << fixed(s.min_h_pos) << '\n';
        out << "stats.red_crossings=" << s.red_crossings << '\n';
    }
    for (std::size_t i = 0; i < r.engagements.size(); ++i) {
        const auto& e = r.engagements[i];
        out << "engagement." << i << "=" << e.key << " t=" << fixed(e.time) << " h=" << fixed(e.h_engage)
            << " rho=" << fixed(e.rho) << " gamma=" << fixed(e.gamma) << " deadline=" << fixed(e.deadline)
            << " bound=" << fixed(e.bound) << '\n';
    }
}

void write_report(const RunReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report '" + path.string() + "'");
    write_report(report, out);
    if (!out) throw std::runtime_error("I/O error writing '" + path.string() + "'");
}

}  // namespace stlcbf
