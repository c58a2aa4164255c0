#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ifc/ast.hpp"
#include "ifc/print.hpp"
#include "ifc/value.hpp"

namespace ifc::dsl {

struct TypeError : UsageError {
  using UsageError::UsageError;
};

/// A Program with every subterm annotated: node types, resolved variable
/// slots, per-function frame sizes and inferred return types.
struct TypedProgram {
  Program program;
  std::vector<TypeExpr> node_type;   // indexed by term id
  std::vector<int> slot1;            // Var: slot read; Let: binder; MatchList: head binder
  std::vector<int> slot2;            // MatchList: tail binder
  std::vector<int> callee;           // Call/ToLabeled: resolved function index
  std::vector<int> frame_size;       // indexed by function index
  std::vector<TypeExpr> fn_return;   // indexed by function index
  std::uint64_t hash = 0;

  const TypeExpr& type_of(const Term& t) const { return node_type[t.id]; }
  const Lattice& lattice() const { return *program.lattice; }
};

namespace detail {

using OptType = std::optional<TypeExpr>;

class Checker {
 public:
  explicit Checker(const Program& p) : p_(p), ret_(p.functions.size()) {}

  TypedProgram run() {
    // Return types are inferred; recursive calls read the previous pass's
    // guess, so iterate until they stop moving.
    for (std::size_t pass = 0; pass <= p_.functions.size() + 1; ++pass) {
      bool changed = false;
      tolerant_ = true;
      for (std::size_t i = 0; i < p_.functions.size(); ++i) {
        OptType t = check_function(i, nullptr);
        if (t && (!ret_[i] || !(*ret_[i] == *t))) {
          ret_[i] = t;
          changed = true;
        }
      }
      if (!changed) break;
    }
    for (std::size_t i = 0; i < p_.functions.size(); ++i)
      if (!ret_[i])
        throw TypeError("cannot infer the return type of '" + p_.functions[i].name + "'");

    TypedProgram out;
    out.program = p_;
    out.node_type.resize(p_.node_count);
    out.slot1.assign(p_.node_count, -1);
    out.slot2.assign(p_.node_count, -1);
    out.callee.assign(p_.node_count, -1);
    out.frame_size.resize(p_.functions.size());
    out.hash = program_hash(p_);
    tolerant_ = false;
    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      OptType t = check_function(i, &out);
      out.fn_return.push_back(*ret_[i]);
      if (!(*t == *ret_[i]))
        throw TypeError("return type of '" + p_.functions[i].name + "' did not stabilize");
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const Term& t, const std::string& what) {
    throw TypeError(what + " (node " + std::to_string(t.id) + ")");
  }

  OptType merge(const Term& at, const OptType& a, const OptType& b) {
    if (!a) return b;
    if (!b) return a;
    if (*a == *b) return a;
    fail(at, "branches disagree: " + a->str() + " vs " + b->str());
  }

  void need(const Term& t, const OptType& got, const TypeExpr& want, const char* where) {
    if (!got) {
      if (tolerant_) return;
      fail(t, std::string(where) + ": type not yet known");
    }
    if (!(*got == want))
      fail(t, std::string(where) + ": expected " + want.str() + ", got " + got->str());
  }

  OptType check_function(std::size_t index, TypedProgram* out) {
    const FunctionDef& fn = p_.functions[index];
    env_.clear();
    next_slot_ = 0;
    for (const auto& par : fn.params) env_.emplace_back(par.name, Binding{next_slot_++, par.type});
    max_slot_ = next_slot_;
    out_ = out;
    OptType t = check(*fn.body);
    if (out) out->frame_size[index] = max_slot_;
    return t;
  }

  struct Binding {
    int slot;
    OptType type;
  };

  int push(const std::string& name, OptType type) {
    int slot = next_slot_++;
    max_slot_ = std::max(max_slot_, next_slot_);
    env_.emplace_back(name, Binding{slot, std::move(type)});
    return slot;
  }

  void pop(std::size_t n) {
    env_.resize(env_.size() - n);
    // slots are not reused; frames stay small enough not to care
  }

  const Binding& lookup(const Term& t, const std::string& name) {
    for (auto it = env_.rbegin(); it != env_.rend(); ++it)
      if (it->first == name) return it->second;
    fail(t, "unbound variable '" + name + "'");
  }

  void annotate(const Term& t, const OptType& type) {
    if (out_ && type) out_->node_type[t.id] = *type;
  }

  OptType check(const Term& t) {
    OptType result = check_inner(t);
    annotate(t, result);
    if (!tolerant_ && !result) fail(t, "unresolved type");
    return result;
  }

  OptType check_inner(const Term& t) {
    switch (t.kind) {
      case TermKind::IntLit:
        return TypeExpr::intt();
      case TermKind::BoolLit:
        return TypeExpr::boolean();
      case TermKind::UnitLit:
        return TypeExpr::unit();
      case TermKind::LabelLit:
      case TermKind::GetCurrent:
        return TypeExpr::label();
      case TermKind::Var: {
        const Binding& b = lookup(t, t.name);
        if (out_) out_->slot1[t.id] = b.slot;
        return b.type;
      }
      case TermKind::Let: {
        OptType bound = check(*t.kids[0]);
        int slot = push(t.name, bound);
        if (out_) out_->slot1[t.id] = slot;
        OptType body = check(*t.kids[1]);
        pop(1);
        return body;
      }
      case TermKind::If: {
        need(t, check(*t.kids[0]), TypeExpr::boolean(), "if condition");
        OptType a = check(*t.kids[1]);
        OptType b = check(*t.kids[2]);
        return merge(t, a, b);
      }
      case TermKind::Prim: {
        switch (t.op) {
          case PrimOp::Add:
          case PrimOp::Sub:
          case PrimOp::Mul:
            need(t, check(*t.kids[0]), TypeExpr::intt(), "arithmetic");
            need(t, check(*t.kids[1]), TypeExpr::intt(), "arithmetic");
            return TypeExpr::intt();
          case PrimOp::Lt:
            need(t, check(*t.kids[0]), TypeExpr::intt(), "comparison");
            need(t, check(*t.kids[1]), TypeExpr::intt(), "comparison");
            return TypeExpr::boolean();
          case PrimOp::Eq: {
            OptType a = check(*t.kids[0]);
            OptType b = check(*t.kids[1]);
            OptType m = merge(t, a, b);
            if (m && m->kind != TypeKind::Int && m->kind != TypeKind::Bool &&
                m->kind != TypeKind::LabelT && m->kind != TypeKind::Unit)
              fail(t, "equality needs a scalar type, got " + m->str());
            return TypeExpr::boolean();
          }
          case PrimOp::And:
          case PrimOp::Or:
            need(t, check(*t.kids[0]), TypeExpr::boolean(), "boolean op");
            need(t, check(*t.kids[1]), TypeExpr::boolean(), "boolean op");
            return TypeExpr::boolean();
          case PrimOp::Not:
            need(t, check(*t.kids[0]), TypeExpr::boolean(), "boolean op");
            return TypeExpr::boolean();
        }
        return std::nullopt;
      }
      case TermKind::CanFlow:
      case TermKind::Join:
        need(t, check(*t.kids[0]), TypeExpr::label(), "lattice op");
        need(t, check(*t.kids[1]), TypeExpr::label(), "lattice op");
        return t.kind == TermKind::CanFlow ? TypeExpr::boolean() : TypeExpr::label();
      case TermKind::LabelOp: {
        OptType v = check(*t.kids[0]);
        need(t, check(*t.kids[1]), TypeExpr::label(), "label target");
        if (!v) return std::nullopt;
        if (v->kind == TypeKind::Labeled) fail(t, "label would nest Labeled directly");
        return TypeExpr::labeled(*v);
      }
      case TermKind::Unlabel: {
        OptType v = check(*t.kids[0]);
        if (!v) return std::nullopt;
        if (v->kind != TypeKind::Labeled) fail(t, "unlabel needs a Labeled value, got " + v->str());
        return v->args[0];
      }
      case TermKind::ToLabeled:
      case TermKind::Call: {
        int callee = p_.index_of(t.name);
        if (out_) out_->callee[t.id] = callee;
        const FunctionDef& fn = p_.functions[callee];
        if (t.kids.size() != fn.params.size())
          fail(t, "'" + t.name + "' expects " + std::to_string(fn.params.size()) + " arguments");
        for (std::size_t i = 0; i < t.kids.size(); ++i)
          need(t, check(*t.kids[i]), fn.params[i].type, "argument");
        OptType r = ret_[callee];
        if (t.kind == TermKind::Call) return r;
        if (!r) return std::nullopt;
        if (r->kind == TypeKind::Labeled)
          fail(t, "tolabeled of a function returning Labeled would nest protection");
        return TypeExpr::labeled(*r);
      }
      case TermKind::Nil:
        return TypeExpr::list(*t.ann);
      case TermKind::Cons: {
        OptType h = check(*t.kids[0]);
        OptType tl = check(*t.kids[1]);
        if (tl && tl->kind != TypeKind::List) fail(t, "cons onto a non-list " + tl->str());
        OptType from_tail = tl ? OptType(tl->args[0]) : std::nullopt;
        OptType elem = merge(t, h, from_tail);
        return elem ? OptType(TypeExpr::list(*elem)) : std::nullopt;
      }
      case TermKind::MatchList: {
        OptType scrut = check(*t.kids[0]);
        if (scrut && scrut->kind != TypeKind::List)
          fail(t, "matchlist needs a list, got " + scrut->str());
        OptType elem = scrut ? OptType(scrut->args[0]) : std::nullopt;
        OptType nil_branch = check(*t.kids[1]);
        int hd_slot = push(t.name, elem);
        int tl_slot = push(t.name2, scrut);
        if (out_) {
          out_->slot1[t.id] = hd_slot;
          out_->slot2[t.id] = tl_slot;
        }
        OptType cons_branch = check(*t.kids[2]);
        pop(2);
        return merge(t, nil_branch, cons_branch);
      }
      case TermKind::MkPair: {
        OptType a = check(*t.kids[0]);
        OptType b = check(*t.kids[1]);
        if (!a || !b) return std::nullopt;
        return TypeExpr::pair(*a, *b);
      }
      case TermKind::Fst:
      case TermKind::Snd: {
        OptType v = check(*t.kids[0]);
        if (!v) return std::nullopt;
        if (v->kind != TypeKind::PairT) fail(t, "projection needs a pair, got " + v->str());
        return v->args[t.kind == TermKind::Fst ? 0 : 1];
      }
      case TermKind::EraseLabeled: {
        need(t, check(*t.kids[0]), TypeExpr::label(), "erasure level");
        OptType v = check(*t.kids[1]);
        if (!v) return std::nullopt;
        if (v->kind != TypeKind::Labeled)
          fail(t, "eraselabeled needs a Labeled value, got " + v->str());
        return v;
      }
      case TermKind::SetCurrentTcb:
        need(t, check(*t.kids[0]), TypeExpr::label(), "setcurrent!");
        return TypeExpr::unit();
    }
    return std::nullopt;
  }

  const Program& p_;
  std::vector<OptType> ret_;
  bool tolerant_ = true;
  std::vector<std::pair<std::string, Binding>> env_;
  int next_slot_ = 0;
  int max_slot_ = 0;
  TypedProgram* out_ = nullptr;
};

}  // namespace detail

inline TypedProgram typecheck(Program p) {
  return detail::Checker(p).run();
}

/// Does a runtime value inhabit the given type? Holes inhabit every type.
inline bool value_matches(const Value& v, const TypeExpr& type) {
  if (v.is_hole()) return true;
  switch (type.kind) {
    case TypeKind::Int: return v.is_int();
    case TypeKind::Bool: return v.is_bool();
    case TypeKind::Unit: return v.is_unit();
    case TypeKind::LabelT: return v.is_label();
    case TypeKind::Labeled:
      return v.is_labeled() && value_matches(v.as_labeled()->data_tcb(), type.args[0]);
    case TypeKind::List: {
      if (!v.is_list()) return false;
      for (const ConsCell* c = v.as_list().get(); c; c = c->tail.get())
        if (!value_matches(c->head, type.args[0])) return false;
      return true;
    }
    case TypeKind::PairT:
      return v.is_pair() && value_matches(v.as_pair()->first, type.args[0]) &&
             value_matches(v.as_pair()->second, type.args[1]);
  }
  return false;
}

/// The shape a type takes once tags are erased from the runtime: Labeled
/// wrappers vanish, containers keep their structure.
inline TypeExpr ghost_shape(const TypeExpr& type) {
  switch (type.kind) {
    case TypeKind::Labeled: return ghost_shape(type.args[0]);
    case TypeKind::List: return TypeExpr::list(ghost_shape(type.args[0]));
    case TypeKind::PairT: return TypeExpr::pair(ghost_shape(type.args[0]), ghost_shape(type.args[1]));
    default: return type;
  }
}

}  // namespace ifc::dsl
