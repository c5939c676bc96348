#include "stlcbf/stl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace stlcbf {

SpecParseError::SpecParseError(int line, int column, const std::string& what)
    : std::runtime_error("spec:" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Single-line recursive-descent parser over a whitespace-insensitive token stream.
class LineParser {
public:
    LineParser(std::string_view line, int line_no, const BarrierRegistry& reg, double default_eps)
        : s_(line), line_no_(line_no), reg_(reg), default_eps_(default_eps) {}

    bool at_end() {
        skip_ws();
        return pos_ >= s_.size();
    }

    bool try_keyword(std::string_view kw) {
        skip_ws();
        if (s_.substr(pos_, kw.size()) != kw) return false;
        const std::size_t after = pos_ + kw.size();
        if (after < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[after])) || s_[after] == '_'))
            return false;
        pos_ = after;
        return true;
    }

    double number() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                    s_[pos_] == 'e' || s_[pos_] == 'E' || s_[pos_] == '-' || s_[pos_] == '+'))
            ++pos_;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
        if (ec != std::errc() || ptr != s_.data() + pos_ || start == pos_) {
            pos_ = start;
            fail("expected a number");
        }
        return v;
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    bool peek(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }

    std::vector<StlFormula> conjunction() {
        std::vector<StlFormula> out;
        out.push_back(term());
        while (peek('&')) {
            ++pos_;
            out.push_back(term());
        }
        if (!at_end()) fail("unexpected trailing input");
        return out;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw SpecParseError(line_no_, static_cast<int>(pos_) + 1, msg);
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    StlFormula term() {
        skip_ws();
        const std::size_t start = pos_;
        if (try_keyword("true")) return StlFormula{Truth{}};
        if (try_keyword("G")) {
            TimeInterval iv = interval();
            PredicateRef p = predicate_after_operator();
            return StlFormula{Globally{iv, std::move(p)}};
        }
        if (try_keyword("F")) {
            TimeInterval iv = interval();
            PredicateRef p = predicate_after_operator();
            Eventually ev{iv, std::move(p), std::nullopt};
            skip_ws();
            if (peek('@')) {
                ++pos_;
                if (!try_keyword("ts")) fail("expected 'ts' after '@'");
                expect('=');
                const std::size_t ts_pos = pos_;
                SatisfactionTime st{number(), default_eps_};
                if (try_keyword("eps")) {
                    expect('=');
                    st.epsilon = number();
                }
                if (!(st.epsilon > 0.0)) fail("eps must be positive");
                if (st.t_s < iv.start || st.t_s + st.epsilon > iv.end) {
                    pos_ = ts_pos;
                    fail("satisfaction window [" + fmt_num(st.t_s) + ", " + fmt_num(st.t_s + st.epsilon) +
                         ") is not inside [" + fmt_num(iv.start) + ", " + fmt_num(iv.end) + ")");
                }
                ev.when = st;
            }
            return StlFormula{std::move(ev)};
        }
        if (peek('!') || looking_at_sat()) {
            pos_ = start;
            return StlFormula{Atom{predicate()}};
        }
        fail("expected 'G', 'F', 'sat', '!sat' or 'true'");
    }

    bool looking_at_sat() {
        skip_ws();
        return s_.substr(pos_, 3) == "sat";
    }

    PredicateRef predicate_after_operator() {
        skip_ws();
        const std::size_t save = pos_;
        if (try_keyword("G") || try_keyword("F")) {
            pos_ = save;
            fail("nested temporal operators are not supported");
        }
        return predicate();
    }

    TimeInterval interval() {
        expect('[');
        const std::size_t at = pos_;
        const double a = number();
        expect(',');
        const double b = number();
        expect(')');
        try {
            return TimeInterval::make(a, b);
        } catch (const InvalidArgument& e) {
            pos_ = at;
            fail(e.what());
        }
    }

    PredicateRef predicate() {
        bool negated = false;
        if (peek('!')) {
            ++pos_;
            negated = true;
            skip_ws();
            if (s_.substr(pos_, 1) == "G" || s_.substr(pos_, 1) == "F")
                fail("negation of temporal formulas is not supported");
        }
        if (!try_keyword("sat")) fail("expected 'sat('");
        expect('(');
        skip_ws();
        const std::size_t id_start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                    s_[pos_] == '.' || s_[pos_] == '-'))
            ++pos_;
        std::string id(s_.substr(id_start, pos_ - id_start));
        if (id.empty()) fail("expected barrier identifier");
        if (!reg_.contains(id)) {
            pos_ = id_start;
            fail("unknown barrier id '" + id + "'");
        }
        expect(')');
        return PredicateRef{id, negated, reg_.resolve(id, negated)};
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_no_;
    const BarrierRegistry& reg_;
    double default_eps_;
};

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string interval_str(const TimeInterval& iv) {
    return "[" + fmt_num(iv.start) + "," + fmt_num(iv.end) + ")";
}

void flatten_into(const StlFormula& f, std::vector<StlFormula>& out) {
    if (const auto* a = std::get_if<And>(&f.node)) {
        for (const auto& t : a->terms) flatten_into(t, out);
    } else {
        out.push_back(f);
    }
}

double formula_end(const StlFormula& f) {
    return std::visit(Overloaded{[](const Truth&) { return 0.0; }, [](const Atom&) { return 0.0; },
                                 [](const Globally& g) { return g.interval.end; },
                                 [](const Eventually& e) { return e.interval.end; },
                                 [](const And& a) {
                                     double m = 0.0;
                                     for (const auto& t : a.terms) m = std::max(m, formula_end(t));
                                     return m;
                                 }},
                      f.node);
}

StlFormula convert(const StlFormula& f) {
    return std::visit(
        Overloaded{[](const Eventually& e) -> StlFormula {
                       if (!e.when)
                           throw InvalidArgument("no satisfaction time for F" + interval_str(e.interval) + " " +
                                                 e.pred.label());
                       const SatisfactionTime& w = *e.when;
                       if (!(w.epsilon > 0.0) || w.t_s < e.interval.start || w.t_s + w.epsilon > e.interval.end)
                           throw InvalidArgument("satisfaction window of F" + interval_str(e.interval) + " " +
                                                 e.pred.label() + " leaves its interval");
                       return StlFormula{Globally{TimeInterval::make(w.t_s, w.t_s + w.epsilon), e.pred}};
                   },
                   [](const And& a) -> StlFormula {
                       And out;
                       for (const auto& t : a.terms) out.terms.push_back(convert(t));
                       return StlFormula{std::move(out)};
                   },
                   [&f](const auto&) -> StlFormula { return f; }},
        f.node);
}

}  // namespace

std::string to_string(const StlFormula& f) {
    return std::visit(Overloaded{[](const Truth&) -> std::string { return "true"; },
                                 [](const Atom& a) { return a.pred.label(); },
                                 [](const Globally& g) { return "G" + interval_str(g.interval) + " " + g.pred.label(); },
                                 [](const Eventually& e) {
                                     std::string s = "F" + interval_str(e.interval) + " " + e.pred.label();
                                     if (e.when)
                                         s += " @ts=" + fmt_num(e.when->t_s) + " eps=" + fmt_num(e.when->epsilon);
                                     return s;
                                 },
                                 [](const And& a) {
                                     std::string s;
                                     for (std::size_t i = 0; i < a.terms.size(); ++i) {
                                         if (i) s += " & ";
                                         s += to_string(a.terms[i]);
                                     }
                                     return s;
                                 }},
                      f.node);
}

StlSpec parse_spec(std::string_view text, const BarrierRegistry& registry, double default_epsilon) {
    StlSpec spec;
    std::optional<double> horizon;
    int line_no = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        std::size_t nl = text.find('\n', begin);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(begin, nl - begin);
        begin = nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

        LineParser p(line, line_no, registry, default_epsilon);
        if (p.at_end()) continue;
        if (p.try_keyword("horizon")) {
            if (horizon) p.fail("duplicate horizon declaration");
            const double h = p.number();
            if (!(h >= 0.0) || !std::isfinite(h)) p.fail("horizon must be finite and non-negative");
            if (!p.at_end()) p.fail("unexpected trailing input");
            horizon = h;
            continue;
        }
        for (auto& f : p.conjunction()) spec.tasks.push_back(std::move(f));
        if (nl == text.size()) break;
    }
    double last = 0.0;
    for (const auto& f : spec.tasks) last = std::max(last, formula_end(f));
    spec.horizon = horizon.value_or(last);
    return spec;
}

StlSpec eventually_to_globally(const StlSpec& spec) {
    StlSpec out;
    out.horizon = spec.horizon;
    for (const auto& f : spec.tasks) out.tasks.push_back(convert(f));
    return out;
}

std::vector<StlFormula> flatten(const StlSpec& spec) {
    std::vector<StlFormula> out;
    for (const auto& f : spec.tasks) flatten_into(f, out);
    return out;
}

std::vector<TaskGroup> group_tasks(const StlSpec& spec) {
    std::vector<std::pair<TimeInterval, PredicateRef>> items;
    for (const auto& f : flatten(spec)) {
        if (const auto* g = std::get_if<Globally>(&f.node)) {
            items.emplace_back(g->interval, g->pred);
        } else if (std::holds_alternative<Eventually>(f.node)) {
            throw InvalidArgument("group_tasks needs eventually operators converted first");
        }
    }
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (items[a].first.start != items[b].first.start) return items[a].first.start < items[b].first.start;
        return items[a].first.end < items[b].first.end;
    });

    // First fit in start order: a group is free once its last interval ended.
    std::vector<TaskGroup> groups;
    for (std::size_t idx : order) {
        const auto& [iv, pred] = items[idx];
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const TaskGroup& g) { return g.predicates.back().first.end <= iv.start; });
        if (it == groups.end()) {
            groups.push_back(TaskGroup{"G" + std::to_string(groups.size() + 1), {}});
            it = std::prev(groups.end());
        }
        it->predicates.emplace_back(iv, pred);
    }
    return groups;
}

bool SatisfactionReport::satisfied() const {
    return std::all_of(entries.begin(), entries.end(), [](const SatisfactionEntry& e) { return e.satisfied; });
}

SatisfactionReport monitor_formula(const Trace& trace, const StlFormula& f, double tol) {
    SatisfactionReport rep;
    std::vector<StlFormula> leaves;
    flatten_into(f, leaves);
    for (const auto& leaf : leaves) {
        SatisfactionEntry e;
        e.formula = to_string(leaf);
        std::visit(Overloaded{[&](const Truth&) { e.margin = std::numeric_limits<double>::infinity(); },
                              [&](const And&) { e.margin = std::numeric_limits<double>::infinity(); },
                              [&](const Atom& a) {
                                  const TraceRow& r = trace.rows.front();
                                  e.margin = a.pred.barrier().value(r.t, r.x);
                                  e.time = r.t;
                                  e.satisfied = e.margin >= -tol;
                              },
                              [&](const Globally& g) {
                                  e.margin = std::numeric_limits<double>::infinity();
                                  for (const auto& r : trace.rows) {
                                      if (!g.interval.contains(r.t)) continue;
                                      const double h = g.pred.barrier().value(r.t, r.x);
                                      if (h < e.margin) {
                                          e.margin = h;
                                          e.time = r.t;
                                      }
                                  }
                                  e.satisfied = e.margin >= -tol;
                              },
                              [&](const Eventually& ev) {
                                  e.margin = -std::numeric_limits<double>::infinity();
                                  for (const auto& r : trace.rows) {
                                      if (!ev.interval.contains(r.t)) continue;
                                      const double h = ev.pred.barrier().value(r.t, r.x);
                                      if (h > e.margin) {
                                          e.margin = h;
                                          e.time = r.t;
                                      }
                                  }
                                  e.satisfied = e.margin >= -tol;
                              }},
                   leaf.node);
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

SatisfactionReport monitor_trace(const Trace& trace, const StlSpec& spec, double tol) {
    if (trace.rows.empty()) throw InvalidArgument("cannot monitor an empty trace");
    const double slack = 1e-9 * std::max(1.0, spec.horizon);
    if (trace.rows.back().t + slack < spec.horizon)
        throw InvalidArgument("trace ends at t=" + fmt_num(trace.rows.back().t) + " before the horizon " +
                              fmt_num(spec.horizon));
    SatisfactionReport rep;
    for (const auto& f : spec.tasks) {
        auto part = monitor_formula(trace, f, tol);
        rep.entries.insert(rep.entries.end(), part.entries.begin(), part.entries.end());
    }
    return rep;
}

}  // namespace stlcbf
