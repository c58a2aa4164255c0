#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifc/erasure.hpp"
#include "ifc/interp.hpp"
#include "ifc/parse.hpp"

namespace ifc::ni {

/// Finite value grids the theorem quantifies over. The defaults keep an
/// exhaustive trilevel run in the low thousands of cases.
struct Domains {
  std::vector<std::int64_t> int_grid{0, 1, 2};
  int max_list_len = 2;
  bool clearance_in_contexts = true;
};

/// The per-client noninterference statement, instantiated and ready to
/// test: for every erasure level, argument tuple and entry context passing
/// the precondition, the low view of the plain run equals the low view of
/// the erased run.
struct NITheorem {
  dsl::TypedProgram original;
  dsl::TypedProgram erased;
  std::string entry;
  std::string erased_entry;
  std::vector<Label> levels;
  std::vector<std::vector<Value>> param_domains;
  std::vector<IfcContext> contexts;
  std::uint64_t program_hash = 0;
};

struct Strategy {
  enum class Kind { Exhaustive, Random };
  Kind kind = Kind::Exhaustive;
  std::uint64_t seed = 0;
  std::size_t samples = 10000;

  static Strategy exhaustive() { return {}; }
  static Strategy random(std::uint64_t seed, std::size_t samples) {
    return {Kind::Random, seed, samples};
  }
};

struct Counterexample {
  Label level;
  std::vector<Value> args;
  IfcContext context;
  std::string lhs_view;
  std::string rhs_view;
};

struct NIReport {
  bool passed = false;
  std::uint64_t cases = 0;         // cases actually run (precondition included)
  std::uint64_t filtered = 0;      // grid points the precondition rejected
  std::uint64_t inconclusive = 0;  // fuel ran out on either side
  std::optional<Counterexample> counterexample;
};

namespace detail {

inline void enumerate_type(const dsl::TypeExpr& t, const std::vector<Label>& labels,
                           const Domains& d, std::vector<Value>& out) {
  using dsl::TypeKind;
  switch (t.kind) {
    case TypeKind::Int:
      for (auto n : d.int_grid) out.push_back(Value::integer(n));
      return;
    case TypeKind::Bool:
      out.push_back(Value::boolean(false));
      out.push_back(Value::boolean(true));
      return;
    case TypeKind::Unit:
      out.push_back(Value::unit());
      return;
    case TypeKind::LabelT:
      for (Label l : labels) out.push_back(Value::label(l));
      return;
    case TypeKind::Labeled: {
      std::vector<Value> payloads;
      enumerate_type(t.args[0], labels, d, payloads);
      for (const Value& p : payloads)
        for (Label tag : labels) out.push_back(Value::labeled(p, tag));
      return;
    }
    case TypeKind::List: {
      std::vector<Value> elems;
      enumerate_type(t.args[0], labels, d, elems);
      std::vector<Value> lists{Value::nil()};
      out.push_back(Value::nil());
      for (int len = 1; len <= d.max_list_len; ++len) {
        std::vector<Value> longer;
        for (const Value& tail : lists)
          for (const Value& e : elems) longer.push_back(Value::cons(e, tail));
        for (const Value& l : longer) out.push_back(l);
        lists = std::move(longer);
      }
      return;
    }
    case TypeKind::PairT: {
      std::vector<Value> firsts, seconds;
      enumerate_type(t.args[0], labels, d, firsts);
      enumerate_type(t.args[1], labels, d, seconds);
      for (const Value& a : firsts)
        for (const Value& b : seconds) out.push_back(Value::pair(a, b));
      return;
    }
  }
}

inline bool pre_satisfied(const dsl::FunctionDef& fn, const std::vector<Value>& args,
                          const IfcContext& ctx) {
  for (const auto& atom : fn.pre) {
    auto side = [&](dsl::PreAtom::Side s, const std::string& name,
                    const std::optional<Label>& lit) -> std::optional<Label> {
      switch (s) {
        case dsl::PreAtom::Side::Cur:
          return ctx.cur;
        case dsl::PreAtom::Side::Param:
          for (std::size_t i = 0; i < fn.params.size(); ++i)
            if (fn.params[i].name == name && args[i].is_label()) return args[i].as_label();
          return std::nullopt;
        case dsl::PreAtom::Side::Lit:
          return lit;
      }
      return std::nullopt;
    };
    auto l = side(atom.lhs, atom.lhs_name, atom.lhs_lit);
    auto r = side(atom.rhs, atom.rhs_name, atom.rhs_lit);
    if (!l || !r || !ctx.cur.owner->can_flow(*l, *r)) return false;
  }
  return true;
}

enum class CaseResult { Agrees, Differs, Inconclusive };

struct CaseOutcome {
  CaseResult result;
  std::string lhs_view, rhs_view;
};

inline CaseOutcome run_case(const NITheorem& t, Label level, const std::vector<Value>& args,
                            const IfcContext& ctx, std::uint64_t fuel,
                            const interp::EvalHooks* erased_hooks = nullptr) {
  IfcOutcome lhs = interp::eval(t.original, t.entry, args, ctx, EnforcementMode::dynamic(), fuel);
  std::vector<Value> erased_args;
  erased_args.reserve(args.size() + 1);
  erased_args.push_back(Value::label(level));
  erased_args.insert(erased_args.end(), args.begin(), args.end());
  IfcOutcome rhs =
      interp::eval(t.erased, t.erased_entry, std::move(erased_args), ctx,
                   EnforcementMode::dynamic(), fuel, erased_hooks);

  auto fuel_out = [](const IfcOutcome& o) {
    return !o.ok() && o.error().kind == IfcErrorKind::FuelExhausted;
  };
  if (fuel_out(lhs) || fuel_out(rhs)) return {CaseResult::Inconclusive, "", ""};

  if (lhs.ok() != rhs.ok()) {
    auto view = [&](const IfcOutcome& o) {
      return o.ok() ? show(erasure::erase_ctx(level, o.success()))
                    : std::string(to_string(o.error().kind));
    };
    return {CaseResult::Differs, view(lhs), view(rhs)};
  }
  if (!lhs.ok()) {
    // the failure channel is public: the error kinds must coincide
    if (lhs.error().kind == rhs.error().kind) return {CaseResult::Agrees, "", ""};
    return {CaseResult::Differs, to_string(lhs.error().kind), to_string(rhs.error().kind)};
  }
  Value lv = erasure::erase_ctx(level, lhs.success());
  Value rv = erasure::erase_ctx(level, rhs.success());
  if (lv == rv) return {CaseResult::Agrees, "", ""};
  return {CaseResult::Differs, show(lv), show(rv)};
}

inline std::vector<Value> shrink_value(const Lattice& lat, const Value& v) {
  std::vector<Value> out;
  if (v.is_int()) {
    std::int64_t n = v.as_int();
    if (n != 0) {
      out.push_back(Value::integer(0));
      if (n / 2 != 0) out.push_back(Value::integer(n / 2));
      out.push_back(Value::integer(n > 0 ? n - 1 : n + 1));
    }
  } else if (v.is_bool()) {
    if (v.as_bool()) out.push_back(Value::boolean(false));
  } else if (v.is_label()) {
    for (Label l : lat.elements())
      if (!(l == v.as_label()) && lat.can_flow(l, v.as_label())) out.push_back(Value::label(l));
  } else if (v.is_labeled()) {
    const LabeledValue& lv = *v.as_labeled();
    for (const Value& d : shrink_value(lat, lv.data_tcb())) out.push_back(Value::labeled(d, lv.tag()));
    for (Label l : lat.elements())
      if (!(l == lv.tag()) && lat.can_flow(l, lv.tag()))
        out.push_back(Value::labeled(lv.data_tcb(), l));
  } else if (v.is_list() && v.as_list()) {
    std::vector<Value> items;
    for (const ConsCell* c = v.as_list().get(); c; c = c->tail.get()) items.push_back(c->head);
    auto rebuild = [](const std::vector<Value>& xs) {
      Value out = Value::nil();
      for (auto it = xs.rbegin(); it != xs.rend(); ++it) out = Value::cons(*it, out);
      return out;
    };
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::vector<Value> dropped = items;
      dropped.erase(dropped.begin() + i);
      out.push_back(rebuild(dropped));
    }
    for (std::size_t i = 0; i < items.size(); ++i)
      for (const Value& e : shrink_value(lat, items[i])) {
        std::vector<Value> replaced = items;
        replaced[i] = e;
        out.push_back(rebuild(replaced));
      }
  } else if (v.is_pair()) {
    for (const Value& a : shrink_value(lat, v.as_pair()->first))
      out.push_back(Value::pair(a, v.as_pair()->second));
    for (const Value& b : shrink_value(lat, v.as_pair()->second))
      out.push_back(Value::pair(v.as_pair()->first, b));
  }
  return out;
}

}  // namespace detail

/// Builds the theorem for one entry point: quantified erasure level, one
/// finite domain per parameter, and entry contexts filtered later by the
/// function's precondition.
inline NITheorem gen_ni_theorem(const dsl::TypedProgram& tp, std::string_view entry,
                                const Domains& d = {}) {
  const dsl::FunctionDef* fn = tp.program.find(entry);
  if (!fn) throw UsageError("unknown function '" + std::string(entry) + "'");

  NITheorem t;
  t.original = tp;
  erasure::ErasedProgram ep = erasure::erase_function(tp, entry);
  t.erased = dsl::typecheck(ep.program);
  t.entry = entry;
  t.erased_entry = ep.erased_name(entry);
  t.program_hash = tp.hash;

  const Lattice& lat = *tp.program.lattice;
  if (!lat.element_count())
    throw UsageError("noninterference checking needs an enumerable lattice");
  t.levels = lat.elements();

  for (const auto& par : fn->params) {
    std::vector<Value> domain;
    detail::enumerate_type(par.type, t.levels, d, domain);
    t.param_domains.push_back(std::move(domain));
  }
  for (Label cur : t.levels) {
    t.contexts.push_back({cur, std::nullopt});
    if (d.clearance_in_contexts)
      for (Label cl : t.levels)
        if (lat.can_flow(cur, cl)) t.contexts.push_back({cur, cl});
  }
  return t;
}

/// Re-runs one concrete case; true when the two low views disagree.
inline bool case_fails(const NITheorem& t, const Counterexample& c,
                       std::uint64_t fuel = interp::kDefaultFuel,
                       const interp::EvalHooks* erased_hooks = nullptr) {
  if (!detail::pre_satisfied(*t.original.program.find(t.entry), c.args, c.context)) return false;
  return detail::run_case(t, c.level, c.args, c.context, fuel, erased_hooks).result ==
         detail::CaseResult::Differs;
}

/// Greedy deterministic minimization: lower labels, smaller ints, shorter
/// lists, while the case keeps failing.
inline Counterexample shrink(const NITheorem& t, Counterexample c,
                             std::uint64_t fuel = interp::kDefaultFuel,
                             const interp::EvalHooks* erased_hooks = nullptr) {
  const Lattice& lat = *t.original.program.lattice;
  for (int rounds = 0; rounds < 500; ++rounds) {
    bool improved = false;
    auto try_adopt = [&](Counterexample candidate) {
      if (case_fails(t, candidate, fuel, erased_hooks)) {
        c = std::move(candidate);
        improved = true;
        return true;
      }
      return false;
    };

    for (Label l : lat.elements()) {
      if (!(l == c.level) && lat.can_flow(l, c.level)) {
        Counterexample cand = c;
        cand.level = l;
        if (try_adopt(std::move(cand))) break;
      }
    }
    if (improved) continue;

    for (Label l : lat.elements()) {
      if (!(l == c.context.cur) && lat.can_flow(l, c.context.cur)) {
        Counterexample cand = c;
        cand.context.cur = l;
        if (try_adopt(std::move(cand))) break;
      }
    }
    if (improved) continue;
    if (c.context.clearance) {
      Counterexample cand = c;
      cand.context.clearance = std::nullopt;
      try_adopt(std::move(cand));
      if (improved) continue;
    }

    for (std::size_t i = 0; i < c.args.size() && !improved; ++i)
      for (Value& smaller : detail::shrink_value(lat, c.args[i])) {
        Counterexample cand = c;
        cand.args[i] = std::move(smaller);
        if (try_adopt(std::move(cand))) break;
      }
    if (!improved) break;
  }
  auto out = detail::run_case(t, c.level, c.args, c.context, fuel, erased_hooks);
  c.lhs_view = out.lhs_view;
  c.rhs_view = out.rhs_view;
  return c;
}

/// Checks the theorem over the whole grid (or a seeded sample). Any FAIL is
/// a genuine, replayable violation; PASS is relative to domain coverage.
inline NIReport check_ni(const NITheorem& t, const Strategy& strategy = Strategy::exhaustive(),
                         std::uint64_t fuel = interp::kDefaultFuel,
                         const interp::EvalHooks* erased_hooks = nullptr) {
  const dsl::FunctionDef& fn = *t.original.program.find(t.entry);
  NIReport report;

  auto consider = [&](Label level, const std::vector<Value>& args, const IfcContext& ctx) {
    if (!detail::pre_satisfied(fn, args, ctx)) {
      report.filtered++;
      return true;
    }
    auto out = detail::run_case(t, level, args, ctx, fuel, erased_hooks);
    report.cases++;
    if (out.result == detail::CaseResult::Inconclusive) {
      report.inconclusive++;
      return true;
    }
    if (out.result == detail::CaseResult::Agrees) return true;
    Counterexample c{level, args, ctx, out.lhs_view, out.rhs_view};
    report.counterexample = shrink(t, std::move(c), fuel, erased_hooks);
    return false;
  };

  if (strategy.kind == Strategy::Kind::Exhaustive) {
    std::vector<std::size_t> index(t.param_domains.size(), 0);
    bool done = false;
    std::vector<Value> args(t.param_domains.size());
    while (!done) {
      for (std::size_t i = 0; i < index.size(); ++i) args[i] = t.param_domains[i][index[i]];
      for (Label level : t.levels) {
        for (const IfcContext& ctx : t.contexts)
          if (!consider(level, args, ctx)) goto finish;
      }
      // odometer over the parameter domains
      done = true;
      for (std::size_t i = 0; i < index.size(); ++i) {
        if (++index[i] < t.param_domains[i].size()) {
          done = false;
          break;
        }
        index[i] = 0;
      }
      if (index.empty()) break;
    }
  } else {
    std::mt19937_64 rng(strategy.seed);
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    for (std::size_t i = 0; i < strategy.samples; ++i) {
      Label level = t.levels[pick(t.levels.size())];
      std::vector<Value> args;
      for (const auto& dom : t.param_domains) args.push_back(dom[pick(dom.size())]);
      IfcContext ctx = t.contexts[pick(t.contexts.size())];
      if (!consider(level, args, ctx)) goto finish;
    }
  }

finish:
  report.passed = !report.counterexample && report.inconclusive == 0;
  return report;
}

inline nlohmann::json report_to_json(const NIReport& r, const NITheorem& t,
                                     const Strategy& strategy) {
  nlohmann::json j;
  j["entry"] = t.entry;
  j["strategy"] = strategy.kind == Strategy::Kind::Exhaustive ? "exhaustive" : "random";
  j["cases"] = r.cases;
  j["filtered"] = r.filtered;
  j["inconclusive"] = r.inconclusive;
  j["verdict"] = r.passed ? "pass" : "fail";
  if (r.counterexample) {
    const auto& c = *r.counterexample;
    nlohmann::json cj;
    cj["level"] = c.level.str();
    cj["cur"] = c.context.cur.str();
    if (c.context.clearance) cj["clearance"] = c.context.clearance->str();
    cj["args"] = nlohmann::json::array();
    for (const auto& a : c.args) cj["args"].push_back(show(a));
    cj["lhs"] = c.lhs_view;
    cj["rhs"] = c.rhs_view;
    j["counterexample"] = cj;
  }
  return j;
}

}  // namespace ifc::ni
