#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "ifc/lattice.hpp"
#include "ifc/value.hpp"

namespace ifc {

namespace an {
struct Certificate;
}

/// The floating state threaded through every IFC computation: the current
/// label, and optionally a clearance the current label may never exceed.
struct IfcContext {
  Label cur;
  std::optional<Label> clearance;

  bool valid() const {
    return !clearance || cur.owner->can_flow(cur, *clearance);
  }

  friend bool operator==(const IfcContext&, const IfcContext&) = default;
};

enum class IfcErrorKind { InvalidLabel, ClearanceViolation, FuelExhausted, PreconditionUnsatisfied };

inline const char* to_string(IfcErrorKind k) {
  switch (k) {
    case IfcErrorKind::InvalidLabel: return "InvalidLabel";
    case IfcErrorKind::ClearanceViolation: return "ClearanceViolation";
    case IfcErrorKind::FuelExhausted: return "FuelExhausted";
    case IfcErrorKind::PreconditionUnsatisfied: return "PreconditionUnsatisfied";
  }
  return "?";
}

/// A failed IFC computation. This is a value, not a host exception, so the
/// noninterference checker can compare failing runs.
struct IfcError {
  IfcErrorKind kind;
  int site = -1;  // label site for InvalidLabel, -1 elsewhere
  std::string message;

  friend bool operator==(const IfcError&, const IfcError&) = default;
};

struct IfcSuccess {
  Value value;
  IfcContext context;
};

/// Either a result with its final context, or an IfcError.
class IfcOutcome {
 public:
  IfcOutcome(IfcSuccess s) : rep_(std::move(s)) {}
  IfcOutcome(IfcError e) : rep_(std::move(e)) {}

  bool ok() const { return std::holds_alternative<IfcSuccess>(rep_); }
  const IfcSuccess& success() const { return std::get<IfcSuccess>(rep_); }
  const IfcError& error() const { return std::get<IfcError>(rep_); }

 private:
  std::variant<IfcSuccess, IfcError> rep_;
};

inline std::string show(const IfcOutcome& o) {
  if (o.ok())
    return show(o.success().value) + " @cur=" + o.success().context.cur.str();
  const auto& e = o.error();
  std::string out = std::string("error:") + to_string(e.kind);
  if (e.site >= 0) out += "@" + std::to_string(e.site);
  return out;
}

enum class ModeKind { Dynamic, StaticResidual, Ghost };

inline const char* to_string(ModeKind m) {
  switch (m) {
    case ModeKind::Dynamic: return "dynamic";
    case ModeKind::StaticResidual: return "static";
    case ModeKind::Ghost: return "ghost";
  }
  return "?";
}

/// How label flow is enforced while a program runs. Static-residual and
/// ghost execution carry the certificate that justifies the checks they
/// skip; ghost mode is only constructible for fully proved programs (see
/// ghost_mode in analyzer.hpp).
struct EnforcementMode {
  ModeKind kind = ModeKind::Dynamic;
  std::shared_ptr<const an::Certificate> certificate;

  static EnforcementMode dynamic() { return {}; }
};

namespace rt {

template <class T>
using Res = std::variant<T, IfcError>;

template <class T>
bool ok(const Res<T>& r) {
  return std::holds_alternative<T>(r);
}

inline std::optional<IfcError> clearance_block(const IfcContext& ctx, Label next_cur) {
  if (ctx.clearance && !ctx.cur.owner->can_flow(next_cur, *ctx.clearance))
    return IfcError{IfcErrorKind::ClearanceViolation, -1,
                    "current label would exceed clearance"};
  return std::nullopt;
}

inline Label get_current(const IfcContext& ctx) { return ctx.cur; }

/// Trusted-base primitive: clients never see it; the runtime internals and
/// deliberate-leak fixtures do.
inline Res<IfcContext> set_current(IfcContext ctx, Label l) {
  ctx.cur.owner->check_member(l);
  if (auto block = clearance_block(ctx, l)) return *block;
  ctx.cur = l;
  return ctx;
}

inline Res<IfcContext> raise(IfcContext ctx, Label l) {
  Label next = ctx.cur.owner->join(ctx.cur, l);
  if (auto block = clearance_block(ctx, next)) return *block;
  ctx.cur = next;
  return ctx;
}

struct UnlabelResult {
  Value value;
  IfcContext context;
};

inline Res<UnlabelResult> unlabel(IfcContext ctx, const LabeledValue& lv) {
  Label next = ctx.cur.owner->join(ctx.cur, lv.tag());
  if (auto block = clearance_block(ctx, next)) return *block;
  ctx.cur = next;
  return UnlabelResult{lv.data_tcb(), ctx};
}

struct LabelResult {
  LabeledValue value;
  IfcContext context;  // unchanged: labelling never moves the current label
};

/// The monitor's order query. Out of line on purpose: this is the library
/// boundary a dynamic check crosses, and what a discharged check removes.
[[gnu::noinline]] inline bool monitor_can_flow(Label a, Label b) {
  return a.owner->can_flow(a, b);
}

/// Wraps v at label l. With check set, enforces cur canFlow l (and the
/// clearance bound on l); a residualized site passes check = false.
/// Deliberately out of line: this is the monitor call a discharged site no
/// longer makes, so it must stay a call for the mode comparison to mean
/// anything.
[[gnu::noinline]] inline Res<LabelResult> label(IfcContext ctx, Value v, Label l, int site = -1,
                                                bool check = true) {
  if (check) {
    if (!monitor_can_flow(ctx.cur, l))
      return IfcError{IfcErrorKind::InvalidLabel, site, "invalid label"};
    if (ctx.clearance && !monitor_can_flow(l, *ctx.clearance))
      return IfcError{IfcErrorKind::ClearanceViolation, site,
                      "label exceeds clearance"};
  }
  return LabelResult{LabeledValue(std::move(v), l), ctx};
}

/// Runs cmp from ctx, labels its result with the post-cmp current label and
/// restores the entry label. cmp: IfcContext -> Res<std::pair<Value, IfcContext>>.
template <class F>
Res<LabelResult> to_labeled(IfcContext ctx, F&& cmp) {
  Label saved = ctx.cur;
  Res<std::pair<Value, IfcContext>> r = cmp(ctx);
  if (auto* err = std::get_if<IfcError>(&r)) return *err;
  auto& [value, after] = std::get<std::pair<Value, IfcContext>>(r);
  LabeledValue lv(std::move(value), after.cur);
  after.cur = saved;
  return LabelResult{std::move(lv), after};
}

}  // namespace rt
}  // namespace ifc
