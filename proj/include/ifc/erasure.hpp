#pragma once

#include <set>
#include <string>
#include <vector>

#include "ifc/ast.hpp"
#include "ifc/runtime.hpp"
#include "ifc/typecheck.hpp"
#include "ifc/value.hpp"

namespace ifc::erasure {

/// Which argument positions of each primitive absorb a hole. Every built-in
/// is contaminant in every position; the registry exists so tests can state
/// and probe that fact per position.
class ContaminationRegistry {
 public:
  ContaminationRegistry() {
    using dsl::PrimOp;
    for (PrimOp op : {PrimOp::Add, PrimOp::Sub, PrimOp::Mul, PrimOp::Eq, PrimOp::Lt, PrimOp::And,
                      PrimOp::Or, PrimOp::Not}) {
      auto& positions = table_.emplace_back();
      positions.op = op;
      for (int i = 0; i < dsl::prim_arity(op); ++i) positions.contaminant.insert(i);
    }
  }

  bool contaminates(dsl::PrimOp op, int arg_index) const {
    for (const auto& row : table_)
      if (row.op == op) return row.contaminant.count(arg_index) > 0;
    return true;
  }

  static const ContaminationRegistry& defaults() {
    static const ContaminationRegistry reg;
    return reg;
  }

 private:
  struct Row {
    dsl::PrimOp op;
    std::set<int> contaminant;
  };
  std::vector<Row> table_;
};

inline Value erase_value(Label level, const Value& v);

/// Projects a labeled value to the view of an observer at `level`: payloads
/// above the level become holes, tags always stay.
inline LabeledValue erase_labeled(Label level, const LabeledValue& lv) {
  if (level.owner->can_flow(lv.tag(), level))
    return LabeledValue(erase_value(level, lv.data_tcb()), lv.tag());
  return LabeledValue(Value::hole(), lv.tag());
}

/// Structural eraser: identity on scalars and holes, maps over lists and
/// pairs, erase_labeled on labeled values.
inline Value erase_value(Label level, const Value& v) {
  if (v.is_labeled())
    return Value::labeled(std::make_shared<const LabeledValue>(erase_labeled(level, *v.as_labeled())));
  if (v.is_list()) {
    std::vector<Value> heads;
    for (const ConsCell* c = v.as_list().get(); c; c = c->tail.get())
      heads.push_back(erase_value(level, c->head));
    Value out = Value::nil();
    for (auto it = heads.rbegin(); it != heads.rend(); ++it) out = Value::cons(*it, out);
    return out;
  }
  if (v.is_pair()) {
    const auto& p = v.as_pair();
    return Value::pair(erase_value(level, p->first), erase_value(level, p->second));
  }
  return v;
}

/// The low view of a finished run: if the final current label flows to the
/// observation level, the result is erased structurally; otherwise the whole
/// result is a hole.
inline Value erase_ctx(Label level, const Value& result, const IfcContext& final_ctx) {
  if (level.owner->can_flow(final_ctx.cur, level)) return erase_value(level, result);
  return Value::hole();
}

inline Value erase_ctx(Label level, const IfcSuccess& s) {
  return erase_ctx(level, s.value, s.context);
}

// ---------------------------------------------------------------------------
// Function erasure

/// A program extended, for the entry function and everything it reaches,
/// with f_erased variants that take the erasure level as their first
/// parameter and wrap every labeled subterm in an eraselabeled call.
struct ErasedProgram {
  dsl::Program program;
  std::string level_param;  // the lErase parameter name used throughout

  std::string erased_name(std::string_view fn) const { return std::string(fn) + "_erased"; }
};

namespace detail {

inline void collect_names(const dsl::Term& t, std::set<std::string>& names) {
  if (!t.name.empty()) names.insert(t.name);
  if (!t.name2.empty()) names.insert(t.name2);
  for (const auto& k : t.kids) collect_names(*k, names);
}

inline void collect_callees(const dsl::Term& t, std::vector<std::string>& out) {
  if (t.kind == dsl::TermKind::Call || t.kind == dsl::TermKind::ToLabeled) out.push_back(t.name);
  for (const auto& k : t.kids) collect_callees(*k, out);
}

inline dsl::TermPtr erase_term(const dsl::TypedProgram& tp, const dsl::Term& t,
                               const std::string& level_param) {
  dsl::Term out = t;
  out.id = -1;
  out.kids.clear();
  for (const auto& k : t.kids) out.kids.push_back(erase_term(tp, *k, level_param));
  if (t.kind == dsl::TermKind::Call || t.kind == dsl::TermKind::ToLabeled) {
    out.name = t.name + "_erased";
    out.kids.insert(out.kids.begin(), dsl::mk_var(level_param));
  }
  if (t.kind == dsl::TermKind::LabelOp) out.site = -1;  // fresh site in the copy
  dsl::TermPtr built = dsl::mk(std::move(out));
  if (tp.type_of(t).kind == dsl::TypeKind::Labeled)
    built = dsl::mk_erase_labeled(dsl::mk_var(level_param), built);
  return built;
}

}  // namespace detail

/// Emits f_erased for the entry function and all client functions it
/// transitively calls. Originals are kept untouched; erased copies get
/// fresh site ids.
inline ErasedProgram erase_function(const dsl::TypedProgram& tp, std::string_view entry) {
  const dsl::Program& p = tp.program;
  if (!p.find(entry)) throw UsageError("unknown function '" + std::string(entry) + "'");

  // reachable client functions, entry first
  std::vector<std::string> order;
  std::vector<std::string> work{std::string(entry)};
  while (!work.empty()) {
    std::string fn = work.back();
    work.pop_back();
    if (std::find(order.begin(), order.end(), fn) != order.end()) continue;
    order.push_back(fn);
    std::vector<std::string> callees;
    detail::collect_callees(*p.find(fn)->body, callees);
    for (auto& c : callees) work.push_back(c);
  }

  // a level parameter name no reachable function already uses
  std::set<std::string> taken;
  for (const auto& fn : p.functions) {
    taken.insert(fn.name);
    for (const auto& par : fn.params) taken.insert(par.name);
    detail::collect_names(*fn.body, taken);
  }
  std::string level_param = "lerase";
  while (taken.count(level_param)) level_param += "_";

  ErasedProgram out;
  out.level_param = level_param;
  out.program = p;
  for (const auto& fname : order) {
    const dsl::FunctionDef& fn = *p.find(fname);
    if (p.find(fname + "_erased"))
      throw UsageError("name '" + fname + "_erased' is already taken");
    dsl::FunctionDef erased;
    erased.name = fname + "_erased";
    erased.params.push_back({level_param, dsl::TypeExpr::label()});
    erased.params.insert(erased.params.end(), fn.params.begin(), fn.params.end());
    erased.pre = fn.pre;  // the contract is left as written
    erased.body = detail::erase_term(tp, *fn.body, level_param);
    out.program.functions.push_back(std::move(erased));
  }
  out.program = dsl::finalize(std::move(out.program));
  return out;
}

}  // namespace ifc::erasure
