#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ifc/analyzer.hpp"
#include "ifc/erasure.hpp"
#include "ifc/runtime.hpp"
#include "ifc/typecheck.hpp"

namespace ifc::interp {

/// Step budget: spent once per call or tolabeled entry, the entry invocation
/// included. Exhaustion is an IfcError, which keeps every run total.
constexpr std::uint64_t kDefaultFuel = 1'000'000;

struct EvalHooks {
  std::function<void(Label tag, int tolabeled_depth)> on_unlabel;
  std::function<void(int site, bool check_performed)> on_label;
  // overrides the eraser behind eraselabeled terms; mutation fixtures use
  // this to plant erasure bugs the checker must catch
  std::function<LabeledValue(Label, const LabeledValue&)> erase_labeled_impl;
};

/// The hole-propagation rule for primitives: a hole in a contaminant
/// argument position absorbs the application. Every built-in is contaminant
/// everywhere, so any hole among the arguments yields a hole.
inline std::optional<Value> eval_hole_prim(dsl::PrimOp op, const std::vector<Value>& args) {
  const auto& reg = erasure::ContaminationRegistry::defaults();
  for (std::size_t i = 0; i < args.size(); ++i)
    if (args[i].is_hole() && reg.contaminates(op, static_cast<int>(i))) return Value::hole();
  return std::nullopt;
}

namespace detail {

struct Fail {
  IfcError error;
};

template <ModeKind M>
class Evaluator {
 public:
  Evaluator(const dsl::TypedProgram& tp, const an::Certificate* cert, const EvalHooks* hooks,
            std::uint64_t fuel)
      : tp_(tp), lat_(*tp.program.lattice), cert_(cert), hooks_(hooks), fuel_(fuel) {
    stack_.resize(256);
  }

  Value run(int fn_index, std::vector<Value>&& args, IfcContext& ctx) {
    ctx_ = &ctx;
    ensure(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) stack_[i] = std::move(args[i]);
    top_ = args.size();
    return call(fn_index, 0);
  }

  void reset(std::uint64_t fuel) {
    fuel_ = fuel;
    top_ = 0;
    tolabeled_depth_ = 0;
  }

 private:
  void ensure(std::size_t need) {
    if (stack_.size() < need) stack_.resize(std::max(need, stack_.size() * 2));
  }

  /// Enters fn with its parameters already placed at `base`.
  Value call(int fn_index, std::size_t base) {
    if (fuel_ == 0) throw Fail{{IfcErrorKind::FuelExhausted, -1, "fuel exhausted"}};
    --fuel_;
    std::size_t saved_top = top_;
    top_ = base + tp_.frame_size[fn_index];
    ensure(top_);
    Value result = eval(*tp_.program.functions[fn_index].body, base);
    top_ = saved_top;
    return result;
  }

  /// Evaluates call arguments into a fresh frame and returns its base.
  std::size_t eval_args(const dsl::Term& t, std::size_t base) {
    std::size_t callee_base = top_;
    top_ += t.kids.size();
    ensure(top_);
    for (std::size_t i = 0; i < t.kids.size(); ++i)
      stack_[callee_base + i] = eval(*t.kids[i], base);
    return callee_base;
  }

  Value eval(const dsl::Term& t, std::size_t base) {
    using dsl::TermKind;
    switch (t.kind) {
      case TermKind::IntLit:
        return Value::integer(t.int_val);
      case TermKind::BoolLit:
        return Value::boolean(t.bool_val);
      case TermKind::UnitLit:
        return Value::unit();
      case TermKind::LabelLit:
        return Value::label(*t.label_val);
      case TermKind::Var:
        return stack_[base + tp_.slot1[t.id]];
      case TermKind::Let: {
        stack_[base + tp_.slot1[t.id]] = eval(*t.kids[0], base);
        return eval(*t.kids[1], base);
      }
      case TermKind::If: {
        Value c = eval(*t.kids[0], base);
        if (c.is_hole()) return c;  // scrutiny of a hole contaminates
        return eval(c.as_bool() ? *t.kids[1] : *t.kids[2], base);
      }
      case TermKind::Prim:
        return prim(t, base);
      case TermKind::CanFlow:
      case TermKind::Join: {
        Value a = eval(*t.kids[0], base);
        Value b = eval(*t.kids[1], base);
        if (a.is_hole() || b.is_hole()) return Value::hole();
        if (t.kind == TermKind::CanFlow)
          return Value::boolean(lat_.can_flow(a.as_label(), b.as_label()));
        return Value::label(lat_.join(a.as_label(), b.as_label()));
      }
      case TermKind::LabelOp: {
        Value v = eval(*t.kids[0], base);
        Value lv = eval(*t.kids[1], base);
        if (lv.is_hole()) return lv;  // a secret-derived target contaminates
        Label target = lv.as_label();
        if constexpr (M == ModeKind::Ghost) return v;
        bool check = t.checked;
        if constexpr (M == ModeKind::StaticResidual)
          check = check && !cert_->proved(t.site);
        if (hooks_ && hooks_->on_label) hooks_->on_label(t.site, check);
        if (check) {
          // the dynamic path is the runtime's label primitive, checks and all
          auto r = rt::label(*ctx_, std::move(v), target, t.site, true);
          if (auto* err = std::get_if<IfcError>(&r)) throw Fail{*err};
          return Value::labeled(
              std::make_shared<const LabeledValue>(std::move(std::get<rt::LabelResult>(r).value)));
        }
        // a discharged site is a plain construction, no runtime call left
        return Value::labeled(std::move(v), target);
      }
      case TermKind::Unlabel: {
        Value v = eval(*t.kids[0], base);
        if constexpr (M == ModeKind::Ghost) return v;
        if (v.is_hole()) return v;
        const LabeledValue& lv = *v.as_labeled();
        Label next = lat_.join(ctx_->cur, lv.tag());
        if (ctx_->clearance && !lat_.can_flow(next, *ctx_->clearance))
          throw Fail{{IfcErrorKind::ClearanceViolation, -1, "current label would exceed clearance"}};
        ctx_->cur = next;
        if (hooks_ && hooks_->on_unlabel) hooks_->on_unlabel(lv.tag(), tolabeled_depth_);
        return lv.data_tcb();
      }
      case TermKind::ToLabeled: {
        int callee = tp_.callee[t.id];
        std::size_t callee_base = eval_args(t, base);
        if constexpr (M == ModeKind::Ghost) {
          Value v = call(callee, callee_base);
          top_ = callee_base;
          return v;
        } else {
          Label saved = ctx_->cur;
          ++tolabeled_depth_;
          Value v = call(callee, callee_base);
          --tolabeled_depth_;
          top_ = callee_base;
          Label inner = ctx_->cur;
          ctx_->cur = saved;
          return Value::labeled(std::move(v), inner);
        }
      }
      case TermKind::Call: {
        int callee = tp_.callee[t.id];
        std::size_t callee_base = eval_args(t, base);
        Value v = call(callee, callee_base);
        top_ = callee_base;
        return v;
      }
      case TermKind::GetCurrent: {
        if constexpr (M == ModeKind::Ghost)
          throw UsageError("getcurrent reached in ghost mode");  // pre-scan forbids this
        else
          return Value::label(ctx_->cur);
      }
      case TermKind::Nil:
        return Value::nil();
      case TermKind::Cons: {
        Value h = eval(*t.kids[0], base);
        Value tl = eval(*t.kids[1], base);
        if (tl.is_hole()) return tl;
        return Value::cons(std::move(h), std::move(tl));
      }
      case TermKind::MatchList: {
        Value scrut = eval(*t.kids[0], base);
        if (scrut.is_hole()) return scrut;  // destructuring a hole contaminates
        const ListPtr& l = scrut.as_list();
        if (!l) return eval(*t.kids[1], base);
        stack_[base + tp_.slot1[t.id]] = l->head;
        stack_[base + tp_.slot2[t.id]] = Value::list(l->tail);
        return eval(*t.kids[2], base);
      }
      case TermKind::MkPair: {
        Value a = eval(*t.kids[0], base);
        Value b = eval(*t.kids[1], base);
        return Value::pair(std::move(a), std::move(b));
      }
      case TermKind::Fst:
      case TermKind::Snd: {
        Value p = eval(*t.kids[0], base);
        if (p.is_hole()) return p;
        return t.kind == TermKind::Fst ? p.as_pair()->first : p.as_pair()->second;
      }
      case TermKind::EraseLabeled: {
        Value l = eval(*t.kids[0], base);
        Value v = eval(*t.kids[1], base);
        if (l.is_hole() || v.is_hole()) return Value::hole();
        if (hooks_ && hooks_->erase_labeled_impl)
          return Value::labeled(std::make_shared<const LabeledValue>(
              hooks_->erase_labeled_impl(l.as_label(), *v.as_labeled())));
        return Value::labeled(std::make_shared<const LabeledValue>(
            erasure::erase_labeled(l.as_label(), *v.as_labeled())));
      }
      case TermKind::SetCurrentTcb: {
        Value l = eval(*t.kids[0], base);
        if (l.is_hole()) return Value::hole();
        if constexpr (M == ModeKind::Ghost) {
          throw UsageError("setcurrent! reached in ghost mode");
        } else {
          Label target = l.as_label();
          if (ctx_->clearance && !lat_.can_flow(target, *ctx_->clearance))
            throw Fail{{IfcErrorKind::ClearanceViolation, -1, "current label would exceed clearance"}};
          ctx_->cur = target;
          return Value::unit();
        }
      }
    }
    throw UsageError("unreachable term kind");
  }

  Value prim(const dsl::Term& t, std::size_t base) {
    using dsl::PrimOp;
    const auto& reg = erasure::ContaminationRegistry::defaults();
    Value a = eval(*t.kids[0], base);
    Value b = t.kids.size() > 1 ? eval(*t.kids[1], base) : Value::unit();
    if (a.is_hole() && reg.contaminates(t.op, 0)) return Value::hole();
    if (t.kids.size() > 1 && b.is_hole() && reg.contaminates(t.op, 1)) return Value::hole();
    auto wrap = [](std::uint64_t n) { return Value::integer(static_cast<std::int64_t>(n)); };
    switch (t.op) {
      case PrimOp::Add:
        return wrap(static_cast<std::uint64_t>(a.as_int()) + static_cast<std::uint64_t>(b.as_int()));
      case PrimOp::Sub:
        return wrap(static_cast<std::uint64_t>(a.as_int()) - static_cast<std::uint64_t>(b.as_int()));
      case PrimOp::Mul:
        return wrap(static_cast<std::uint64_t>(a.as_int()) * static_cast<std::uint64_t>(b.as_int()));
      case PrimOp::Eq:
        return Value::boolean(a == b);
      case PrimOp::Lt:
        return Value::boolean(a.as_int() < b.as_int());
      case PrimOp::And:
        return Value::boolean(a.as_bool() && b.as_bool());
      case PrimOp::Or:
        return Value::boolean(a.as_bool() || b.as_bool());
      case PrimOp::Not:
        return Value::boolean(!a.as_bool());
    }
    throw UsageError("unreachable prim");
  }

  const dsl::TypedProgram& tp_;
  const Lattice& lat_;
  const an::Certificate* cert_;
  const EvalHooks* hooks_;
  std::uint64_t fuel_;
  IfcContext* ctx_ = nullptr;
  std::vector<Value> stack_;
  std::size_t top_ = 0;
  int tolabeled_depth_ = 0;
};

inline void ghost_scan(const dsl::Program& p, std::string_view entry) {
  std::vector<std::string> work{std::string(entry)};
  std::set<std::string> seen;
  while (!work.empty()) {
    std::string fn = work.back();
    work.pop_back();
    if (!seen.insert(fn).second) continue;
    std::vector<const dsl::Term*> stack{p.find(fn)->body.get()};
    while (!stack.empty()) {
      const dsl::Term* t = stack.back();
      stack.pop_back();
      switch (t->kind) {
        case dsl::TermKind::GetCurrent:
          throw UsageError("ghost mode cannot run '" + fn +
                           "': getcurrent needs a runtime current label");
        case dsl::TermKind::SetCurrentTcb:
          throw UsageError("ghost mode cannot run '" + fn + "': setcurrent! is runtime-only");
        case dsl::TermKind::EraseLabeled:
          throw UsageError("ghost mode cannot run '" + fn + "': erasure needs runtime tags");
        case dsl::TermKind::Call:
        case dsl::TermKind::ToLabeled:
          work.push_back(t->name);
          break;
        default:
          break;
      }
      for (const auto& k : t->kids) stack.push_back(k.get());
    }
  }
}

}  // namespace detail

/// Big-step, context-passing evaluation of `entry` on `args` under a mode.
/// The outcome is either the result with the final context or an IfcError;
/// in ghost mode the returned context is the entry context (nothing is
/// tracked at runtime) and the result carries no tags.
inline IfcOutcome eval(const dsl::TypedProgram& tp, std::string_view entry,
                       std::vector<Value> args, IfcContext ctx, const EnforcementMode& mode,
                       std::uint64_t fuel = kDefaultFuel, const EvalHooks* hooks = nullptr) {
  const dsl::Program& p = tp.program;
  int fn_index = p.index_of(entry);
  if (fn_index < 0) throw UsageError("unknown function '" + std::string(entry) + "'");
  const dsl::FunctionDef& fn = p.functions[fn_index];
  if (args.size() != fn.params.size())
    throw UsageError("'" + fn.name + "' expects " + std::to_string(fn.params.size()) +
                     " arguments, got " + std::to_string(args.size()));
  if (ctx.cur.owner != p.lattice.get())
    throw UsageError("entry context label belongs to a different lattice");
  if (!ctx.valid()) throw UsageError("entry context exceeds its clearance");

  if (mode.kind != ModeKind::Dynamic) {
    if (!mode.certificate) throw UsageError("this mode requires a certificate");
    if (mode.certificate->program_hash != dsl::certificate_hash(p))
      throw UsageError("certificate does not match this program");
  }
  if (mode.kind == ModeKind::Ghost) {
    if (ctx.clearance)
      throw UsageError("ghost mode does not track a current label; clearance is unsupported");
    detail::ghost_scan(p, entry);
    for (auto& a : args) a = strip_labels(a);
  }

  for (std::size_t i = 0; i < args.size(); ++i) {
    const dsl::TypeExpr& want = mode.kind == ModeKind::Ghost
                                    ? dsl::ghost_shape(fn.params[i].type)
                                    : fn.params[i].type;
    if (!dsl::value_matches(args[i], want))
      throw UsageError("argument " + std::to_string(i + 1) + " of '" + fn.name +
                       "' does not match type " + fn.params[i].type.str());
  }

  // the entry precondition gates the run in every mode
  for (const auto& atom : fn.pre) {
    auto side = [&](dsl::PreAtom::Side s, const std::string& name,
                    const std::optional<Label>& lit) -> std::optional<Label> {
      switch (s) {
        case dsl::PreAtom::Side::Cur:
          return ctx.cur;
        case dsl::PreAtom::Side::Param: {
          for (std::size_t i = 0; i < fn.params.size(); ++i)
            if (fn.params[i].name == name)
              return args[i].is_label() ? std::optional<Label>(args[i].as_label()) : std::nullopt;
          return std::nullopt;
        }
        case dsl::PreAtom::Side::Lit:
          return lit;
      }
      return std::nullopt;
    };
    auto l = side(atom.lhs, atom.lhs_name, atom.lhs_lit);
    auto r = side(atom.rhs, atom.rhs_name, atom.rhs_lit);
    if (!l || !r || !p.lattice->can_flow(*l, *r))
      return IfcError{IfcErrorKind::PreconditionUnsatisfied, -1,
                      "entry precondition unsatisfied"};
  }

  IfcContext initial = ctx;
  try {
    Value result;
    switch (mode.kind) {
      case ModeKind::Dynamic: {
        detail::Evaluator<ModeKind::Dynamic> ev(tp, nullptr, hooks, fuel);
        result = ev.run(fn_index, std::move(args), ctx);
        break;
      }
      case ModeKind::StaticResidual: {
        detail::Evaluator<ModeKind::StaticResidual> ev(tp, mode.certificate.get(), hooks, fuel);
        result = ev.run(fn_index, std::move(args), ctx);
        break;
      }
      case ModeKind::Ghost: {
        detail::Evaluator<ModeKind::Ghost> ev(tp, mode.certificate.get(), hooks, fuel);
        result = ev.run(fn_index, std::move(args), ctx);
        ctx = initial;  // nothing was tracked; report the entry context
        break;
      }
    }
    return IfcSuccess{std::move(result), ctx};
  } catch (const detail::Fail& f) {
    return f.error;
  }
}

/// True when two outcomes are indistinguishable: same value and final
/// context on success, same error value on failure.
inline bool outcome_equal(const IfcOutcome& a, const IfcOutcome& b) {
  if (a.ok() != b.ok()) return false;
  if (a.ok())
    return a.success().value == b.success().value && a.success().context == b.success().context;
  return a.error() == b.error();
}

/// One entry point validated once and run many times: the benchmark loop
/// must not pay for name lookup, certificate matching or the ghost scan on
/// every iteration. Argument types are not re-validated per run. Each
/// instance owns one evaluator stack, so an instance is not re-entrant;
/// use one per thread.
class PreparedEval {
 public:
  PreparedEval(const dsl::TypedProgram& tp, std::string_view entry, EnforcementMode mode)
      : tp_(&tp), mode_(std::move(mode)), entry_(entry) {
    fn_index_ = tp.program.index_of(entry);
    if (fn_index_ < 0) throw UsageError("unknown function '" + std::string(entry) + "'");
    if (mode_.kind != ModeKind::Dynamic) {
      if (!mode_.certificate) throw UsageError("this mode requires a certificate");
      if (mode_.certificate->program_hash != dsl::certificate_hash(tp.program))
        throw UsageError("certificate does not match this program");
    }
    if (mode_.kind == ModeKind::Ghost) {
      detail::ghost_scan(tp.program, entry);
      for (const auto& par : tp.program.functions[fn_index_].params)
        strip_args_ = strip_args_ || !(dsl::ghost_shape(par.type) == par.type);
    }
    switch (mode_.kind) {
      case ModeKind::Dynamic:
        dyn_.emplace(tp, nullptr, nullptr, kDefaultFuel);
        break;
      case ModeKind::StaticResidual:
        stat_.emplace(tp, mode_.certificate.get(), nullptr, kDefaultFuel);
        break;
      case ModeKind::Ghost:
        ghost_.emplace(tp, mode_.certificate.get(), nullptr, kDefaultFuel);
        break;
    }
  }

  IfcOutcome run(std::vector<Value> args, IfcContext ctx,
                 std::uint64_t fuel = kDefaultFuel) const {
    const dsl::FunctionDef& fn = tp_->program.functions[fn_index_];
    if (strip_args_)
      for (auto& a : args) a = strip_labels(a);
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
      if (!l || !r || !tp_->program.lattice->can_flow(*l, *r))
        return IfcError{IfcErrorKind::PreconditionUnsatisfied, -1,
                        "entry precondition unsatisfied"};
    }
    IfcContext initial = ctx;
    try {
      Value result;
      switch (mode_.kind) {
        case ModeKind::Dynamic:
          dyn_->reset(fuel);
          result = dyn_->run(fn_index_, std::move(args), ctx);
          break;
        case ModeKind::StaticResidual:
          stat_->reset(fuel);
          result = stat_->run(fn_index_, std::move(args), ctx);
          break;
        case ModeKind::Ghost:
          ghost_->reset(fuel);
          result = ghost_->run(fn_index_, std::move(args), ctx);
          ctx = initial;
          break;
      }
      return IfcSuccess{std::move(result), ctx};
    } catch (const detail::Fail& f) {
      return f.error;
    }
  }

  ModeKind mode() const { return mode_.kind; }

 private:
  const dsl::TypedProgram* tp_;
  EnforcementMode mode_;
  std::string entry_;
  int fn_index_;
  bool strip_args_ = false;  // ghost runs whose parameters carry tags
  // one evaluator per prepared entry, its value stack reused across runs
  mutable std::optional<detail::Evaluator<ModeKind::Dynamic>> dyn_;
  mutable std::optional<detail::Evaluator<ModeKind::StaticResidual>> stat_;
  mutable std::optional<detail::Evaluator<ModeKind::Ghost>> ghost_;
};

}  // namespace ifc::interp
