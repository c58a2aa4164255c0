#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifc/ast.hpp"
#include "ifc/print.hpp"
#include "ifc/runtime.hpp"
#include "ifc/typecheck.hpp"

namespace ifc::an {

// ---------------------------------------------------------------------------
// Symbolic label expressions

/// One atom of a symbolic label term. Opaque atoms stand for label values
/// the analysis cannot express; they are keyed by the AST node that produced
/// them and entail nothing beyond syntactic self-coincidence.
struct LAtom {
  enum class Kind { Cur, Param, Tag, Const, Opaque };
  Kind kind = Kind::Cur;
  std::string name;          // Param / Tag
  std::optional<Label> lit;  // Const
  int node = -1;             // Opaque

  friend bool operator==(const LAtom&, const LAtom&) = default;

  std::string str() const {
    switch (kind) {
      case Kind::Cur: return "cur";
      case Kind::Param: return "param:" + name;
      case Kind::Tag: return "tag:" + name;
      case Kind::Const: return "const:" + lit->str();
      case Kind::Opaque: return "opaque:" + std::to_string(node);
    }
    return "?";
  }

  friend bool operator<(const LAtom& a, const LAtom& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.name != b.name) return a.name < b.name;
    if (a.node != b.node) return a.node < b.node;
    std::uint32_t ab = a.lit ? a.lit->bits : 0, bb = b.lit ? b.lit->bits : 0;
    return ab < bb;
  }
};

/// A join of atoms in normal form: sorted, deduplicated, constants folded
/// into at most one, bottom dropped. The empty join is bottom.
struct LabelExpr {
  std::vector<LAtom> atoms;

  friend bool operator==(const LabelExpr&, const LabelExpr&) = default;

  static LabelExpr bottom() { return {}; }
  static LabelExpr cur() { return {{LAtom{LAtom::Kind::Cur}}}; }
  static LabelExpr param(std::string name) {
    return {{LAtom{LAtom::Kind::Param, std::move(name)}}};
  }
  static LabelExpr tag(std::string name) { return {{LAtom{LAtom::Kind::Tag, std::move(name)}}}; }
  static LabelExpr constant(Label l) {
    return {{LAtom{LAtom::Kind::Const, "", l}}};
  }
  static LabelExpr opaque(int node) { return {{LAtom{LAtom::Kind::Opaque, "", {}, node}}}; }

  bool is_bottom() const { return atoms.empty(); }

  std::string str() const {
    if (atoms.empty()) return "bot";
    if (atoms.size() == 1) return atoms[0].str();
    std::string out = "join(";
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (i) out += ", ";
      out += atoms[i].str();
    }
    return out + ")";
  }
};

inline LabelExpr normalize(std::vector<LAtom> atoms, const Lattice& lat) {
  std::optional<Label> folded;
  std::vector<LAtom> rest;
  for (auto& a : atoms) {
    if (a.kind == LAtom::Kind::Const)
      folded = folded ? lat.join(*folded, *a.lit) : *a.lit;
    else
      rest.push_back(std::move(a));
  }
  std::sort(rest.begin(), rest.end());
  rest.erase(std::unique(rest.begin(), rest.end()), rest.end());
  if (folded && (!(*folded == lat.bottom()) || rest.empty()))
    rest.push_back(LAtom{LAtom::Kind::Const, "", folded});
  std::sort(rest.begin(), rest.end());
  return LabelExpr{std::move(rest)};
}

inline LabelExpr join(const LabelExpr& a, const LabelExpr& b, const Lattice& lat) {
  std::vector<LAtom> atoms = a.atoms;
  atoms.insert(atoms.end(), b.atoms.begin(), b.atoms.end());
  return normalize(std::move(atoms), lat);
}

/// An assumed flow between two symbolic labels.
struct FlowFact {
  LabelExpr lhs, rhs;

  friend bool operator==(const FlowFact&, const FlowFact&) = default;
  std::string str() const { return lhs.str() + " <= " + rhs.str(); }
};

/// Sound, incomplete entailment: reflexivity, assumptions, transitivity,
/// bottom, join decomposition on both sides, and evaluation of constant
/// pairs in the lattice.
inline bool entails(const Lattice& lat, const std::vector<FlowFact>& facts, const LabelExpr& lhs,
                    const LabelExpr& rhs) {
  auto atom_is_bottom = [&](const LAtom& a) {
    return a.kind == LAtom::Kind::Const && *a.lit == lat.bottom();
  };
  auto atom_flows_direct = [&](const LAtom& a, const LabelExpr& target) {
    if (atom_is_bottom(a)) return true;
    for (const LAtom& t : target.atoms) {
      if (a == t) return true;
      if (a.kind == LAtom::Kind::Const && t.kind == LAtom::Kind::Const &&
          lat.can_flow(*a.lit, *t.lit))
        return true;
    }
    return false;
  };

  auto atom_flows = [&](const LAtom& start) {
    if (atom_flows_direct(start, rhs)) return true;
    // breadth-first over fact edges; facts decompose on the left (every
    // atom of a join flows wherever the join flows)
    std::vector<LAtom> frontier{start};
    std::vector<LAtom> seen{start};
    std::vector<const LabelExpr*> reached_exprs;
    while (!frontier.empty()) {
      LAtom a = frontier.back();
      frontier.pop_back();
      for (const FlowFact& f : facts) {
        // a fact join(..a..) <= r lets a reach r, since a <= join(..a..)
        bool applies = false;
        for (const LAtom& fa : f.lhs.atoms)
          if (fa == a) applies = true;
        if (!applies) continue;
        if (std::find_if(reached_exprs.begin(), reached_exprs.end(),
                         [&](const LabelExpr* e) { return *e == f.rhs; }) == reached_exprs.end()) {
          reached_exprs.push_back(&f.rhs);
          if (f.rhs == rhs) return true;
          if (f.rhs.atoms.size() == 1) {
            const LAtom& next = f.rhs.atoms[0];
            if (atom_flows_direct(next, rhs)) return true;
            if (std::find(seen.begin(), seen.end(), next) == seen.end()) {
              seen.push_back(next);
              frontier.push_back(next);
            }
          }
        }
      }
      // constant hops: a constant reaches any larger constant mentioned in
      // the facts, which transitivity may then extend
      if (a.kind == LAtom::Kind::Const) {
        for (const FlowFact& f : facts) {
          for (const LAtom& fa : f.lhs.atoms) {
            if (fa.kind == LAtom::Kind::Const && lat.can_flow(*a.lit, *fa.lit) &&
                std::find(seen.begin(), seen.end(), fa) == seen.end()) {
              seen.push_back(fa);
              frontier.push_back(fa);
            }
          }
        }
      }
    }
    return false;
  };

  for (const LAtom& a : lhs.atoms)
    if (!atom_flows(a)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Certificates

enum class Verdict { Proved, NeedsCheck };

inline const char* to_string(Verdict v) {
  return v == Verdict::Proved ? "proved" : "needs_check";
}

struct SiteVerdict {
  int id;
  Verdict verdict;
};

struct FnSummary {
  std::string fname;
  std::vector<std::string> pre;  // canflow atoms, rendered
  std::string exit;              // exit current label over cur/param/tag
};

/// Per-label-site verdicts plus per-function label summaries, tied to the
/// hash of the program they were computed for.
struct Certificate {
  std::uint64_t program_hash = 0;
  std::vector<SiteVerdict> sites;
  std::vector<FnSummary> summaries;

  bool proved(int site) const {
    return site >= 0 && site < static_cast<int>(lut_.size()) && lut_[site];
  }

  bool fully_proved() const {
    for (const auto& s : sites)
      if (s.verdict != Verdict::Proved) return false;
    return true;
  }

  std::vector<int> needs_check_sites() const {
    std::vector<int> out;
    for (const auto& s : sites)
      if (s.verdict != Verdict::Proved) out.push_back(s.id);
    return out;
  }

  const FnSummary* summary(std::string_view fname) const {
    for (const auto& s : summaries)
      if (s.fname == fname) return &s;
    return nullptr;
  }

  void rebuild_lut() {
    lut_.clear();
    for (const auto& s : sites) {
      if (s.id >= static_cast<int>(lut_.size())) lut_.resize(s.id + 1, 0);
      lut_[s.id] = s.verdict == Verdict::Proved ? 1 : 0;
    }
  }

 private:
  std::vector<unsigned char> lut_;
};

// ---------------------------------------------------------------------------
// The analysis

namespace detail {

inline bool type_has_labeled(const dsl::TypeExpr& t) {
  if (t.kind == dsl::TypeKind::Labeled) return true;
  for (const auto& a : t.args)
    if (type_has_labeled(a)) return true;
  return false;
}

/// Abstraction of one bound value: for labels, the set of symbolic values
/// it may be (typically a singleton), and an upper bound on every tag it
/// contains otherwise. A branch on data widens a label to both arms, which
/// an obligation then has to prove for each.
struct VarAbs {
  std::vector<LabelExpr> value;    // Label-typed terms: possible symbolic values
  std::optional<LabelExpr> tags;   // terms containing labeled data: tag bound
  bool tags_exact = true;          // whether `tags` is the exact join of tags

  bool is_label() const { return !value.empty(); }
  bool singleton() const { return value.size() == 1; }
  static VarAbs label(LabelExpr e) { return {{std::move(e)}, std::nullopt, true}; }
};

inline LabelExpr join_choices(const std::vector<LabelExpr>& choices, const Lattice& lat) {
  LabelExpr out = LabelExpr::bottom();
  for (const auto& c : choices) out = join(out, c, lat);
  return out;
}

struct Summary {
  LabelExpr exit = LabelExpr::cur();
  bool exit_exact = true;
  std::optional<LabelExpr> result_tags;
  bool result_exact = true;
  bool widened = false;

  friend bool operator==(const Summary&, const Summary&) = default;
};

struct AbsState {
  LabelExpr cur = LabelExpr::cur();
  bool cur_exact = true;
  std::vector<FlowFact> facts;
};

inline bool has_fact(const std::vector<FlowFact>& facts, const FlowFact& f) {
  return std::find(facts.begin(), facts.end(), f) != facts.end();
}

class Analysis {
 public:
  explicit Analysis(const dsl::TypedProgram& tp)
      : tp_(tp), lat_(*tp.program.lattice), summaries_(tp.program.functions.size()) {}

  Certificate run() {
    // Summaries to fixpoint over the call graph, widening a function after
    // it fails to settle within three recomputations.
    std::vector<int> recomputes(tp_.program.functions.size(), 0);
    for (std::size_t round = 0; round < 4 * tp_.program.functions.size() + 4; ++round) {
      bool changed = false;
      for (std::size_t i = 0; i < tp_.program.functions.size(); ++i) {
        if (summaries_[i].widened) continue;
        Summary next = compute_summary(i);
        if (!(next == summaries_[i])) {
          summaries_[i] = next;
          if (++recomputes[i] > 3) widen(i);
          changed = true;
        }
      }
      if (!changed) break;
    }

    // Verdicts assume each function's own :pre; a call site that cannot
    // discharge a callee's :pre strips that callee of its pre facts and we
    // re-settle, so no verdict ever leans on an unestablished assumption.
    std::set<std::string> pre_stripped;
    for (;;) {
      site_verdicts_.clear();
      failed_pre_.clear();
      for (std::size_t i = 0; i < tp_.program.functions.size(); ++i)
        analyze_function(i, !pre_stripped.count(tp_.program.functions[i].name));
      std::size_t before = pre_stripped.size();
      for (const auto& name : failed_pre_) pre_stripped.insert(name);
      if (pre_stripped.size() == before) break;
    }

    Certificate cert;
    cert.program_hash = dsl::certificate_hash(tp_.program);
    for (int site : dsl::sites_of(tp_.program)) {
      auto it = site_verdicts_.find(site);
      cert.sites.push_back({site, it != site_verdicts_.end() ? it->second : Verdict::NeedsCheck});
    }
    std::sort(cert.sites.begin(), cert.sites.end(),
              [](const SiteVerdict& a, const SiteVerdict& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < tp_.program.functions.size(); ++i) {
      const auto& fn = tp_.program.functions[i];
      FnSummary s;
      s.fname = fn.name;
      for (const auto& atom : fn.pre) s.pre.push_back(render_pre_atom(atom));
      s.exit = summaries_[i].exit.str();
      cert.summaries.push_back(std::move(s));
    }
    cert.rebuild_lut();
    return cert;
  }

  const Summary& summary(std::size_t fn) const { return summaries_[fn]; }

 private:
  std::string render_pre_atom(const dsl::PreAtom& a) const {
    auto side = [&](dsl::PreAtom::Side s, const std::string& n, const std::optional<Label>& lit) {
      switch (s) {
        case dsl::PreAtom::Side::Cur: return std::string("cur");
        case dsl::PreAtom::Side::Param: return n;
        case dsl::PreAtom::Side::Lit: return lat_.show(*lit);
      }
      return std::string("?");
    };
    return "(canflow " + side(a.lhs, a.lhs_name, a.lhs_lit) + " " +
           side(a.rhs, a.rhs_name, a.rhs_lit) + ")";
  }

  LabelExpr pre_side_expr(dsl::PreAtom::Side s, const std::string& name,
                          const std::optional<Label>& lit) const {
    switch (s) {
      case dsl::PreAtom::Side::Cur: return LabelExpr::cur();
      case dsl::PreAtom::Side::Param: return LabelExpr::param(name);
      case dsl::PreAtom::Side::Lit: return LabelExpr::constant(*lit);
    }
    return LabelExpr::cur();
  }

  std::vector<FlowFact> pre_facts(const dsl::FunctionDef& fn) const {
    std::vector<FlowFact> facts;
    for (const auto& a : fn.pre)
      facts.push_back({pre_side_expr(a.lhs, a.lhs_name, a.lhs_lit),
                       pre_side_expr(a.rhs, a.rhs_name, a.rhs_lit)});
    return facts;
  }

  void widen(std::size_t fn_index) {
    const auto& fn = tp_.program.functions[fn_index];
    std::vector<LAtom> atoms{LAtom{LAtom::Kind::Cur}};
    for (const auto& par : fn.params) {
      if (par.type == dsl::TypeExpr::label())
        atoms.push_back(LAtom{LAtom::Kind::Param, par.name});
      else if (type_has_labeled(par.type))
        atoms.push_back(LAtom{LAtom::Kind::Tag, par.name});
    }
    Summary w;
    w.exit = normalize(atoms, lat_);
    w.exit_exact = false;
    bool labeled_result = type_has_labeled(tp_.fn_return[fn_index]);
    if (labeled_result) {
      w.result_tags = w.exit;
      w.result_exact = false;
    }
    w.widened = true;
    summaries_[fn_index] = w;
  }

  Summary compute_summary(std::size_t fn_index) {
    verdict_sink_ = nullptr;
    return walk_function(fn_index, true);
  }

  void analyze_function(std::size_t fn_index, bool with_pre) {
    verdict_sink_ = &site_verdicts_;
    walk_function(fn_index, with_pre);
    verdict_sink_ = nullptr;
  }

  Summary walk_function(std::size_t fn_index, bool with_pre) {
    const dsl::FunctionDef& fn = tp_.program.functions[fn_index];
    env_.assign(tp_.frame_size[fn_index], VarAbs{});
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
      VarAbs abs;
      if (fn.params[i].type == dsl::TypeExpr::label())
        abs.value = {LabelExpr::param(fn.params[i].name)};
      if (type_has_labeled(fn.params[i].type)) abs.tags = LabelExpr::tag(fn.params[i].name);
      env_[i] = std::move(abs);
    }
    AbsState state;
    if (with_pre) state.facts = pre_facts(fn);

    VarAbs result = eval(*fn.body, state);
    Summary s;
    s.exit = state.cur;
    s.exit_exact = state.cur_exact;
    if (type_has_labeled(tp_.fn_return[fn_index])) {
      s.result_tags = result.tags ? *result.tags : LabelExpr::opaque(fn.body->id);
      s.result_exact = result.tags ? result.tags_exact : false;
    }
    return s;
  }

  struct Instantiated {
    LabelExpr expr;
    bool exact;
  };

  Instantiated instantiate(const LabelExpr& e, const dsl::FunctionDef& callee,
                           const std::vector<VarAbs>& args, const AbsState& state, int call_node) {
    std::vector<LAtom> atoms;
    bool exact = true;
    for (const LAtom& a : e.atoms) {
      switch (a.kind) {
        case LAtom::Kind::Cur:
          atoms.insert(atoms.end(), state.cur.atoms.begin(), state.cur.atoms.end());
          exact = exact && state.cur_exact;
          break;
        case LAtom::Kind::Param: {
          const VarAbs* arg = arg_of(callee, args, a.name);
          if (arg && arg->is_label()) {
            LabelExpr bound = join_choices(arg->value, lat_);
            atoms.insert(atoms.end(), bound.atoms.begin(), bound.atoms.end());
            exact = exact && arg->singleton();
          } else {
            atoms.push_back(LAtom{LAtom::Kind::Opaque, "", {}, call_node});
            exact = false;
          }
          break;
        }
        case LAtom::Kind::Tag: {
          const VarAbs* arg = arg_of(callee, args, a.name);
          if (arg && arg->tags) {
            atoms.insert(atoms.end(), arg->tags->atoms.begin(), arg->tags->atoms.end());
            exact = exact && arg->tags_exact;
          } else {
            atoms.push_back(LAtom{LAtom::Kind::Opaque, "", {}, call_node});
            exact = false;
          }
          break;
        }
        case LAtom::Kind::Const:
          atoms.push_back(a);
          break;
        case LAtom::Kind::Opaque:
          atoms.push_back(LAtom{LAtom::Kind::Opaque, "", {}, call_node});
          exact = false;
          break;
      }
    }
    return {normalize(std::move(atoms), lat_), exact};
  }

  const VarAbs* arg_of(const dsl::FunctionDef& callee, const std::vector<VarAbs>& args,
                       const std::string& param) const {
    for (std::size_t i = 0; i < callee.params.size(); ++i)
      if (callee.params[i].name == param) return &args[i];
    return nullptr;
  }

  void record_verdict(int site, bool proved) {
    if (!verdict_sink_) return;
    (*verdict_sink_)[site] = proved ? Verdict::Proved : Verdict::NeedsCheck;
  }

  /// A guard the then-branch may assume: (canflow (getcurrent) e) or
  /// (canflow e1 e2) with label-parameter or literal sides.
  std::optional<FlowFact> guard_fact(const dsl::Term& cond, const AbsState& state) {
    if (cond.kind != dsl::TermKind::CanFlow) return std::nullopt;
    auto side = [&](const dsl::Term& t) -> std::optional<LabelExpr> {
      if (t.kind == dsl::TermKind::LabelLit) return LabelExpr::constant(*t.label_val);
      if (t.kind == dsl::TermKind::Var && tp_.type_of(t) == dsl::TypeExpr::label() &&
          env_[tp_.slot1[t.id]].singleton()) {
        const LabelExpr& v = env_[tp_.slot1[t.id]].value[0];
        if (v.atoms.size() == 1 && v.atoms[0].kind == LAtom::Kind::Param) return v;
      }
      return std::nullopt;
    };
    const dsl::Term& l = *cond.kids[0];
    const dsl::Term& r = *cond.kids[1];
    auto rhs = side(r);
    if (!rhs) return std::nullopt;
    if (l.kind == dsl::TermKind::GetCurrent) {
      // only an exact current-label expression names the tested value; an
      // upper bound could keep its spelling while the runtime label rises,
      // and the fact would then outlive what the guard established
      if (!state.cur_exact) return std::nullopt;
      return FlowFact{state.cur, *rhs};
    }
    auto lhs = side(l);
    if (!lhs) return std::nullopt;
    return FlowFact{*lhs, *rhs};
  }

  VarAbs eval(const dsl::Term& t, AbsState& state) {
    using dsl::TermKind;
    switch (t.kind) {
      case TermKind::IntLit:
      case TermKind::BoolLit:
      case TermKind::UnitLit:
        return {};
      case TermKind::LabelLit:
        return VarAbs::label(LabelExpr::constant(*t.label_val));
      case TermKind::GetCurrent:
        return VarAbs::label(state.cur_exact ? state.cur : LabelExpr::opaque(t.id));
      case TermKind::Var:
        return env_[tp_.slot1[t.id]];
      case TermKind::Let: {
        VarAbs bound = eval(*t.kids[0], state);
        env_[tp_.slot1[t.id]] = std::move(bound);
        return eval(*t.kids[1], state);
      }
      case TermKind::If: {
        VarAbs cond = eval(*t.kids[0], state);
        AbsState then_state = state;
        if (auto fact = guard_fact(*t.kids[0], state))
          if (!has_fact(then_state.facts, *fact)) then_state.facts.push_back(*fact);
        AbsState else_state = state;
        VarAbs a = eval(*t.kids[1], then_state);
        VarAbs b = eval(*t.kids[2], else_state);
        merge_states(state, then_state, else_state);
        return merge_abs(t, a, b);
      }
      case TermKind::Prim: {
        for (const auto& k : t.kids) eval(*k, state);
        return {};
      }
      case TermKind::CanFlow: {
        eval(*t.kids[0], state);
        eval(*t.kids[1], state);
        return {};
      }
      case TermKind::Join: {
        VarAbs a = eval(*t.kids[0], state);
        VarAbs b = eval(*t.kids[1], state);
        if (a.is_label() && b.is_label() && a.value.size() * b.value.size() <= 4) {
          VarAbs out;
          for (const auto& x : a.value)
            for (const auto& y : b.value) {
              LabelExpr j = join(x, y, lat_);
              if (std::find(out.value.begin(), out.value.end(), j) == out.value.end())
                out.value.push_back(j);
            }
          return out;
        }
        return VarAbs::label(LabelExpr::opaque(t.id));
      }
      case TermKind::LabelOp: {
        VarAbs payload = eval(*t.kids[0], state);
        VarAbs target = eval(*t.kids[1], state);
        bool proved;
        LabelExpr target_bound;
        if (target.is_label()) {
          // the target is one of the choices: prove the flow into each
          proved = true;
          for (const auto& choice : target.value)
            proved = proved && entails(lat_, state.facts, state.cur, choice);
          target_bound = join_choices(target.value, lat_);
        } else {
          proved = false;
          target_bound = LabelExpr::opaque(t.id);
        }
        record_verdict(t.site, proved);
        VarAbs out;
        out.tags = payload.tags ? join(target_bound, *payload.tags, lat_) : target_bound;
        out.tags_exact = (payload.tags ? payload.tags_exact : true) && target.singleton();
        return out;
      }
      case TermKind::Unlabel: {
        VarAbs operand = eval(*t.kids[0], state);
        LabelExpr tags = operand.tags ? *operand.tags : LabelExpr::opaque(t.id);
        state.cur = join(state.cur, tags, lat_);
        state.cur_exact = state.cur_exact && operand.tags.has_value() && operand.tags_exact;
        VarAbs out;
        // payload keeps whatever protected data it nests, same bound
        if (type_has_labeled(tp_.type_of(t))) {
          out.tags = tags;
          out.tags_exact = false;
        }
        if (tp_.type_of(t) == dsl::TypeExpr::label()) out.value = {LabelExpr::opaque(t.id)};
        return out;
      }
      case TermKind::EraseLabeled: {
        eval(*t.kids[0], state);
        return eval(*t.kids[1], state);  // tags are preserved by erasure
      }
      case TermKind::SetCurrentTcb: {
        VarAbs target = eval(*t.kids[0], state);
        if (target.singleton()) {
          state.cur = target.value[0];
          state.cur_exact = true;
        } else if (target.is_label()) {
          state.cur = join_choices(target.value, lat_);
          state.cur_exact = false;
        } else {
          state.cur = LabelExpr::opaque(t.id);
          state.cur_exact = true;
        }
        return {};
      }
      case TermKind::ToLabeled:
      case TermKind::Call: {
        std::vector<VarAbs> args;
        for (const auto& k : t.kids) args.push_back(eval(*k, state));
        int callee_index = tp_.program.index_of(t.name);
        const dsl::FunctionDef& callee = tp_.program.functions[callee_index];
        check_call_pre(callee, args, state, t.id);
        const Summary& sum = summaries_[callee_index];
        Instantiated exit = instantiate(sum.exit, callee, args, state, t.id);
        std::optional<Instantiated> rtags;
        if (sum.result_tags) {
          rtags = instantiate(*sum.result_tags, callee, args, state, t.id);
          rtags->exact = rtags->exact && sum.result_exact;
        }
        if (t.kind == TermKind::Call) {
          bool was_exact = state.cur_exact;
          state.cur = exit.expr;
          state.cur_exact = was_exact && exit.exact && sum.exit_exact;
          VarAbs out;
          const dsl::TypeExpr& ret = tp_.fn_return[callee_index];
          if (type_has_labeled(ret)) {
            out.tags = rtags ? rtags->expr : LabelExpr::opaque(t.id);
            out.tags_exact = rtags ? rtags->exact : false;
          }
          if (ret == dsl::TypeExpr::label()) out.value = {LabelExpr::opaque(t.id)};
          return out;
        }
        // tolabeled: the caller's label is untouched; the result is tagged
        // with the callee exit and nests whatever the callee result nests
        VarAbs out;
        LabelExpr bound = exit.expr;
        bool bound_exact = exit.exact && sum.exit_exact;
        if (rtags) {
          bound = join(bound, rtags->expr, lat_);
          bound_exact = bound_exact && rtags->exact;
        }
        out.tags = bound;
        out.tags_exact = bound_exact;
        return out;
      }
      case TermKind::Nil:
        return {{}, type_has_labeled(*t.ann) ? std::optional(LabelExpr::bottom()) : std::nullopt,
                true};
      case TermKind::Cons: {
        VarAbs head = eval(*t.kids[0], state);
        VarAbs tail = eval(*t.kids[1], state);
        if (!type_has_labeled(tp_.type_of(t))) return {};
        LabelExpr bound = head.tags ? *head.tags : LabelExpr::bottom();
        if (tail.tags) bound = join(bound, *tail.tags, lat_);
        return {{}, bound,
                (head.tags ? head.tags_exact : true) && (!tail.tags || tail.tags_exact)};
      }
      case TermKind::MatchList: {
        VarAbs scrut = eval(*t.kids[0], state);
        AbsState nil_state = state;
        VarAbs nil_branch = eval(*t.kids[1], nil_state);
        AbsState cons_state = state;
        VarAbs hd;
        if (type_has_labeled(tp_.node_type[t.kids[0]->id].args[0])) {
          hd.tags = scrut.tags ? *scrut.tags : LabelExpr::opaque(t.id);
          hd.tags_exact = false;  // one element sits below the whole-list bound
        }
        if (tp_.node_type[t.kids[0]->id].args[0] == dsl::TypeExpr::label())
          hd.value = {LabelExpr::opaque(t.id)};
        env_[tp_.slot1[t.id]] = hd;
        VarAbs tl = scrut;
        if (tl.tags) tl.tags_exact = false;
        env_[tp_.slot2[t.id]] = tl;
        VarAbs cons_branch = eval(*t.kids[2], cons_state);
        merge_states(state, nil_state, cons_state);
        return merge_abs(t, nil_branch, cons_branch);
      }
      case TermKind::MkPair: {
        VarAbs a = eval(*t.kids[0], state);
        VarAbs b = eval(*t.kids[1], state);
        if (!type_has_labeled(tp_.type_of(t))) return {};
        LabelExpr bound = a.tags ? *a.tags : LabelExpr::bottom();
        if (b.tags) bound = join(bound, *b.tags, lat_);
        return {{}, bound, (!a.tags || a.tags_exact) && (!b.tags || b.tags_exact)};
      }
      case TermKind::Fst:
      case TermKind::Snd: {
        VarAbs p = eval(*t.kids[0], state);
        VarAbs out;
        if (type_has_labeled(tp_.type_of(t))) {
          out.tags = p.tags ? *p.tags : LabelExpr::opaque(t.id);
          out.tags_exact = false;
        }
        if (tp_.type_of(t) == dsl::TypeExpr::label()) out.value = {LabelExpr::opaque(t.id)};
        return out;
      }
    }
    return {};
  }

  void check_call_pre(const dsl::FunctionDef& callee, const std::vector<VarAbs>& args,
                      const AbsState& state, int call_node) {
    for (const auto& atom : callee.pre) {
      auto side = [&](dsl::PreAtom::Side s, const std::string& name,
                      const std::optional<Label>& lit) -> std::vector<LabelExpr> {
        switch (s) {
          case dsl::PreAtom::Side::Cur:
            return {state.cur};
          case dsl::PreAtom::Side::Param: {
            const VarAbs* arg = arg_of(callee, args, name);
            if (arg && arg->is_label()) return arg->value;
            return {LabelExpr::opaque(call_node)};
          }
          case dsl::PreAtom::Side::Lit:
            return {LabelExpr::constant(*lit)};
        }
        return {LabelExpr::opaque(call_node)};
      };
      // the runtime pair is one lhs choice against one rhs choice: prove all
      for (const LabelExpr& lhs : side(atom.lhs, atom.lhs_name, atom.lhs_lit))
        for (const LabelExpr& rhs : side(atom.rhs, atom.rhs_name, atom.rhs_lit))
          if (!entails(lat_, state.facts, lhs, rhs)) failed_pre_.insert(callee.name);
    }
  }

  void merge_states(AbsState& out, const AbsState& a, const AbsState& b) {
    bool equal = a.cur == b.cur;
    out.cur = join(a.cur, b.cur, lat_);
    out.cur_exact = a.cur_exact && b.cur_exact && equal;
    std::vector<FlowFact> facts;
    for (const auto& f : a.facts)
      if (has_fact(b.facts, f)) facts.push_back(f);
    out.facts = std::move(facts);
  }

  VarAbs merge_abs(const dsl::Term& at, const VarAbs& a, const VarAbs& b) {
    VarAbs out;
    if (a.is_label() || b.is_label()) {
      out.value = a.value;
      for (const auto& c : b.value)
        if (std::find(out.value.begin(), out.value.end(), c) == out.value.end())
          out.value.push_back(c);
      if (out.value.size() > 4) out.value = {LabelExpr::opaque(at.id)};
    }
    if (a.tags || b.tags) {
      LabelExpr bound = a.tags ? *a.tags : LabelExpr::bottom();
      if (b.tags) bound = join(bound, *b.tags, lat_);
      out.tags = bound;
      out.tags_exact = a.tags && b.tags && *a.tags == *b.tags && a.tags_exact && b.tags_exact;
    }
    return out;
  }

  const dsl::TypedProgram& tp_;
  const Lattice& lat_;
  std::vector<Summary> summaries_;
  std::vector<VarAbs> env_;
  std::map<int, Verdict>* verdict_sink_ = nullptr;
  std::map<int, Verdict> site_verdicts_;
  std::set<std::string> failed_pre_;
};

}  // namespace detail

/// Discharges label-site checks statically. Uncertainty yields NeedsCheck,
/// never an unsound Proved.
inline Certificate analyze(const dsl::TypedProgram& tp) {
  return detail::Analysis(tp).run();
}

/// The analyzer's per-function contract: assumed entry facts and the exit
/// current label as a symbolic expression.
inline const FnSummary& summarize(const Certificate& cert, std::string_view fname) {
  const FnSummary* s = cert.summary(fname);
  if (!s) throw UsageError("no summary for function '" + std::string(fname) + "'");
  return *s;
}

/// Drops the dynamic guard from every site the certificate proves; retained
/// sites keep it. The result carries the original program's hash so the
/// certificate still applies.
inline dsl::Program residualize(const dsl::TypedProgram& tp, const Certificate& cert) {
  if (cert.program_hash != dsl::certificate_hash(tp.program))
    throw UsageError("certificate does not match this program");
  struct Rewriter {
    const Certificate& cert;
    dsl::TermPtr walk(const dsl::Term& t) {
      dsl::Term out = t;
      out.id = -1;
      out.kids.clear();
      for (const auto& k : t.kids) out.kids.push_back(walk(*k));
      if (t.kind == dsl::TermKind::LabelOp && cert.proved(t.site)) out.checked = false;
      return dsl::mk(std::move(out));
    }
  } rw{cert};
  dsl::Program out = tp.program;
  for (auto& fn : out.functions) fn.body = rw.walk(*fn.body);
  out.cert_hash_override = cert.program_hash;
  return dsl::finalize(std::move(out));
}

/// Number of label sites whose dynamic guard survives residualization.
inline int retained_checks(const Certificate& cert) {
  return static_cast<int>(cert.needs_check_sites().size());
}

inline EnforcementMode static_residual_mode(std::shared_ptr<const Certificate> cert) {
  if (!cert) throw UsageError("static-residual mode needs a certificate");
  return {ModeKind::StaticResidual, std::move(cert)};
}

// ---------------------------------------------------------------------------
// Certificate serialization

inline nlohmann::json certificate_to_json(const Certificate& cert) {
  nlohmann::json j;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(cert.program_hash));
  j["programHash"] = hash;
  j["sites"] = nlohmann::json::array();
  for (const auto& s : cert.sites)
    j["sites"].push_back({{"id", s.id}, {"verdict", to_string(s.verdict)}});
  j["summaries"] = nlohmann::json::array();
  for (const auto& s : cert.summaries)
    j["summaries"].push_back({{"fname", s.fname}, {"pre", s.pre}, {"exit", s.exit}});
  return j;
}

inline Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate cert;
  cert.program_hash = std::stoull(j.at("programHash").get<std::string>(), nullptr, 16);
  for (const auto& s : j.at("sites")) {
    std::string v = s.at("verdict").get<std::string>();
    if (v != "proved" && v != "needs_check") throw UsageError("bad verdict '" + v + "'");
    cert.sites.push_back(
        {s.at("id").get<int>(), v == "proved" ? Verdict::Proved : Verdict::NeedsCheck});
  }
  if (j.contains("summaries")) {
    for (const auto& s : j.at("summaries")) {
      FnSummary fs;
      fs.fname = s.at("fname").get<std::string>();
      for (const auto& p : s.at("pre")) fs.pre.push_back(p.get<std::string>());
      fs.exit = s.at("exit").get<std::string>();
      cert.summaries.push_back(std::move(fs));
    }
  }
  cert.rebuild_lut();
  return cert;
}

/// Ghost execution drops tags and the current label from the runtime, so it
/// is only constructible when every site is proved.
inline EnforcementMode ghost_mode(std::shared_ptr<const Certificate> cert) {
  if (!cert) throw UsageError("ghost mode needs a certificate");
  if (!cert->fully_proved()) {
    std::string sites;
    for (int s : cert->needs_check_sites()) {
      if (!sites.empty()) sites += ", ";
      sites += std::to_string(s);
    }
    throw UsageError("ghost mode requires a fully proved program; retained checks at sites: " +
                     sites);
  }
  return {ModeKind::Ghost, std::move(cert)};
}

}  // namespace ifc::an
