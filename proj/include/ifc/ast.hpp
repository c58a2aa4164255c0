#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ifc/lattice.hpp"

namespace ifc::dsl {

enum class TypeKind { Int, Bool, Unit, LabelT, Labeled, List, PairT };

/// A type of the client language. Labeled may not directly wrap Labeled;
/// nested protection goes through List or Pair.
struct TypeExpr {
  TypeKind kind = TypeKind::Int;
  std::vector<TypeExpr> args;

  friend bool operator==(const TypeExpr&, const TypeExpr&) = default;

  static TypeExpr intt() { return {TypeKind::Int, {}}; }
  static TypeExpr boolean() { return {TypeKind::Bool, {}}; }
  static TypeExpr unit() { return {TypeKind::Unit, {}}; }
  static TypeExpr label() { return {TypeKind::LabelT, {}}; }
  static TypeExpr labeled(TypeExpr inner) {
    if (inner.kind == TypeKind::Labeled)
      throw UsageError("Labeled may not directly wrap Labeled");
    return {TypeKind::Labeled, {std::move(inner)}};
  }
  static TypeExpr list(TypeExpr elem) { return {TypeKind::List, {std::move(elem)}}; }
  static TypeExpr pair(TypeExpr a, TypeExpr b) {
    return {TypeKind::PairT, {std::move(a), std::move(b)}};
  }

  std::string str() const {
    switch (kind) {
      case TypeKind::Int: return "Int";
      case TypeKind::Bool: return "Bool";
      case TypeKind::Unit: return "Unit";
      case TypeKind::LabelT: return "Label";
      case TypeKind::Labeled: return "(Labeled " + args[0].str() + ")";
      case TypeKind::List: return "(List " + args[0].str() + ")";
      case TypeKind::PairT: return "(Pair " + args[0].str() + " " + args[1].str() + ")";
    }
    return "?";
  }
};

enum class PrimOp { Add, Sub, Mul, Eq, Lt, And, Or, Not };

inline const char* to_string(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "+";
    case PrimOp::Sub: return "-";
    case PrimOp::Mul: return "*";
    case PrimOp::Eq: return "=";
    case PrimOp::Lt: return "<";
    case PrimOp::And: return "and";
    case PrimOp::Or: return "or";
    case PrimOp::Not: return "not";
  }
  return "?";
}

inline int prim_arity(PrimOp op) { return op == PrimOp::Not ? 1 : 2; }

enum class TermKind {
  IntLit,
  BoolLit,
  UnitLit,
  LabelLit,
  Var,
  Let,
  If,
  Prim,
  CanFlow,
  Join,
  LabelOp,
  Unlabel,
  ToLabeled,
  GetCurrent,
  Call,
  Nil,
  Cons,
  MatchList,
  MkPair,
  Fst,
  Snd,
  EraseLabeled,    // injected by the function-erasure transform
  SetCurrentTcb,   // trusted escape hatch; exists for leak fixtures
};

struct Term;
using TermPtr = std::shared_ptr<const Term>;

/// One AST node. Terms are immutable after construction; `id` is a dense
/// pre-order index assigned when a Program is finalized and is not part of
/// structural equality.
struct Term {
  TermKind kind;
  int id = -1;

  std::int64_t int_val = 0;
  bool bool_val = false;
  std::optional<Label> label_val;   // LabelLit
  std::string name;                 // Var | Let binder | Call/ToLabeled target | MatchList head binder
  std::string name2;                // MatchList tail binder
  PrimOp op = PrimOp::Add;
  int site = -1;                    // LabelOp site id
  bool checked = true;              // LabelOp: false once residualized
  std::optional<TypeExpr> ann;      // Nil element type
  std::vector<TermPtr> kids;
  // kids layout:
  //   Let [bound, body] | If [cond, then, else] | Prim args | CanFlow/Join [a, b]
  //   LabelOp [value, label] | Unlabel [t] | ToLabeled args | Call args
  //   Cons [head, tail] | MatchList [scrutinee, nil-branch, cons-branch]
  //   MkPair [a, b] | Fst/Snd [t] | EraseLabeled [label, value] | SetCurrentTcb [label]
};

inline TermPtr mk(Term t) { return std::make_shared<const Term>(std::move(t)); }

inline TermPtr mk_int(std::int64_t n) { return mk({.kind = TermKind::IntLit, .int_val = n}); }
inline TermPtr mk_bool(bool b) { return mk({.kind = TermKind::BoolLit, .bool_val = b}); }
inline TermPtr mk_unit() { return mk({.kind = TermKind::UnitLit}); }
inline TermPtr mk_label_lit(Label l) { return mk({.kind = TermKind::LabelLit, .label_val = l}); }
inline TermPtr mk_var(std::string name) { return mk({.kind = TermKind::Var, .name = std::move(name)}); }
inline TermPtr mk_let(std::string name, TermPtr bound, TermPtr body) {
  return mk({.kind = TermKind::Let, .name = std::move(name), .kids = {std::move(bound), std::move(body)}});
}
inline TermPtr mk_if(TermPtr c, TermPtr t, TermPtr e) {
  return mk({.kind = TermKind::If, .kids = {std::move(c), std::move(t), std::move(e)}});
}
inline TermPtr mk_prim(PrimOp op, std::vector<TermPtr> args) {
  return mk({.kind = TermKind::Prim, .op = op, .kids = std::move(args)});
}
inline TermPtr mk_label_op(TermPtr value, TermPtr label, int site = -1, bool checked = true) {
  return mk({.kind = TermKind::LabelOp,
             .site = site,
             .checked = checked,
             .kids = {std::move(value), std::move(label)}});
}
inline TermPtr mk_unlabel(TermPtr t) { return mk({.kind = TermKind::Unlabel, .kids = {std::move(t)}}); }
inline TermPtr mk_call(std::string fname, std::vector<TermPtr> args) {
  return mk({.kind = TermKind::Call, .name = std::move(fname), .kids = std::move(args)});
}
inline TermPtr mk_to_labeled(std::string fname, std::vector<TermPtr> args) {
  return mk({.kind = TermKind::ToLabeled, .name = std::move(fname), .kids = std::move(args)});
}
inline TermPtr mk_erase_labeled(TermPtr label, TermPtr value) {
  return mk({.kind = TermKind::EraseLabeled, .kids = {std::move(label), std::move(value)}});
}

/// One conjunct of a function precondition: lhs canFlow rhs, where each side
/// is the entry current label, a Label-typed parameter, or a literal.
struct PreAtom {
  enum class Side { Cur, Param, Lit };
  Side lhs = Side::Cur;
  Side rhs = Side::Param;
  std::string lhs_name, rhs_name;
  std::optional<Label> lhs_lit, rhs_lit;

  friend bool operator==(const PreAtom&, const PreAtom&) = default;
};

struct Param {
  std::string name;
  TypeExpr type;

  friend bool operator==(const Param&, const Param&) = default;
};

struct FunctionDef {
  std::string name;
  std::vector<Param> params;
  std::vector<PreAtom> pre;
  TermPtr body;
};

/// An ordered list of function definitions over one lattice instance.
struct Program {
  LatticePtr lattice;
  std::vector<FunctionDef> functions;
  int node_count = 0;
  int max_site = 0;
  // Residual programs keep the hash of the program their certificate was
  // computed for, so certificates survive residualization.
  std::optional<std::uint64_t> cert_hash_override;

  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < functions.size(); ++i)
      if (functions[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const FunctionDef* find(std::string_view name) const {
    int i = index_of(name);
    return i < 0 ? nullptr : &functions[i];
  }
};

inline bool term_equal(const Term& a, const Term& b) {
  if (a.kind != b.kind || a.int_val != b.int_val || a.bool_val != b.bool_val ||
      a.label_val != b.label_val || a.name != b.name || a.name2 != b.name2 || a.op != b.op ||
      a.site != b.site || a.checked != b.checked || a.ann != b.ann ||
      a.kids.size() != b.kids.size())
    return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!term_equal(*a.kids[i], *b.kids[i])) return false;
  return true;
}

inline bool operator==(const FunctionDef& a, const FunctionDef& b) {
  return a.name == b.name && a.params == b.params && a.pre == b.pre &&
         term_equal(*a.body, *b.body);
}

inline bool operator==(const Program& a, const Program& b) {
  if (a.functions.size() != b.functions.size()) return false;
  for (std::size_t i = 0; i < a.functions.size(); ++i)
    if (!(a.functions[i] == b.functions[i])) return false;
  return true;
}

namespace detail {

inline void collect_sites(const Term& t, std::vector<int>& used, bool& any_missing) {
  if (t.kind == TermKind::LabelOp) {
    if (t.site >= 0)
      used.push_back(t.site);
    else
      any_missing = true;
  }
  for (const auto& k : t.kids) collect_sites(*k, used, any_missing);
}

inline TermPtr renumber(const TermPtr& t, int& next_id, int& next_site,
                        const std::vector<int>& used_sites) {
  Term out = *t;
  out.id = next_id++;
  if (out.kind == TermKind::LabelOp && out.site < 0) {
    while (std::find(used_sites.begin(), used_sites.end(), next_site) != used_sites.end())
      ++next_site;
    out.site = next_site++;
  }
  out.kids.clear();
  for (const auto& k : t->kids) out.kids.push_back(renumber(k, next_id, next_site, used_sites));
  return mk(std::move(out));
}

}  // namespace detail

/// Assigns dense pre-order node ids, fills in any missing label-site ids
/// (pre-order, starting at 1, skipping explicit ones), and validates site
/// uniqueness and call targets.
inline Program finalize(Program p) {
  std::vector<int> used_sites;
  bool any_missing = false;
  for (const auto& f : p.functions) detail::collect_sites(*f.body, used_sites, any_missing);
  {
    auto sorted = used_sites;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw UsageError("duplicate label site id");
  }

  for (std::size_t i = 0; i < p.functions.size(); ++i)
    for (std::size_t j = i + 1; j < p.functions.size(); ++j)
      if (p.functions[i].name == p.functions[j].name)
        throw UsageError("duplicate function name '" + p.functions[i].name + "'");

  int next_id = 0, next_site = 1;
  for (auto& f : p.functions) f.body = detail::renumber(f.body, next_id, next_site, used_sites);
  p.node_count = next_id;

  p.max_site = 0;
  std::vector<int> all_sites;
  bool none_missing = false;
  for (const auto& f : p.functions) detail::collect_sites(*f.body, all_sites, none_missing);
  for (int s : all_sites) p.max_site = std::max(p.max_site, s);

  // call targets must resolve; parameter names must be unique per function
  for (const auto& f : p.functions) {
    for (std::size_t i = 0; i < f.params.size(); ++i)
      for (std::size_t j = i + 1; j < f.params.size(); ++j)
        if (f.params[i].name == f.params[j].name)
          throw UsageError("duplicate parameter '" + f.params[i].name + "' in '" + f.name + "'");
    std::vector<const Term*> stack{f.body.get()};
    while (!stack.empty()) {
      const Term* t = stack.back();
      stack.pop_back();
      if ((t->kind == TermKind::Call || t->kind == TermKind::ToLabeled) && !p.find(t->name))
        throw UsageError("call target '" + t->name + "' does not resolve");
      for (const auto& k : t->kids) stack.push_back(k.get());
    }
  }
  return p;
}

/// All label sites of a program, in pre-order.
inline std::vector<int> sites_of(const Program& p) {
  std::vector<int> sites;
  bool ignored = false;
  for (const auto& f : p.functions) detail::collect_sites(*f.body, sites, ignored);
  return sites;
}

}  // namespace ifc::dsl
