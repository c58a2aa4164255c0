#include "ifc/runtime.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

using namespace ifc;

namespace {

TriLevelLattice tri;
Label L() { return tri.element(0); }
Label M() { return tri.element(1); }
Label H() { return tri.element(2); }

template <class T>
const T& val(const rt::Res<T>& r) {
  REQUIRE(rt::ok(r));
  return std::get<T>(r);
}

template <class T>
const IfcError& err(const rt::Res<T>& r) {
  REQUIRE_FALSE(rt::ok(r));
  return std::get<IfcError>(r);
}

}  // namespace

TEST_CASE("get_current reads the floating label") {
  CHECK(rt::get_current({L(), {}}) == L());
  CHECK(rt::get_current({H(), H()}) == H());
  auto raised = val(rt::raise({L(), {}}, M()));
  CHECK(rt::get_current(raised) == M());
}

TEST_CASE("set_current is the trusted escape hatch") {
  CHECK(val(rt::set_current({H(), {}}, L())).cur == L());
  CHECK(err(rt::set_current({L(), M()}, H())).kind == IfcErrorKind::ClearanceViolation);
  auto same = val(rt::set_current({L(), {}}, L()));
  CHECK(same == IfcContext{L(), {}});
}

TEST_CASE("raise joins into the current label") {
  CHECK(val(rt::raise({L(), {}}, M())).cur == M());
  CHECK(val(rt::raise({H(), {}}, L())).cur == H());
  CHECK(err(rt::raise({L(), L()}, H())).kind == IfcErrorKind::ClearanceViolation);
}

TEST_CASE("unlabel returns the payload and raises by the tag") {
  auto r1 = val(rt::unlabel({L(), {}}, LabeledValue(Value::integer(7), M())));
  CHECK(r1.value == Value::integer(7));
  CHECK(r1.context.cur == M());

  auto r2 = val(rt::unlabel({H(), {}}, LabeledValue(Value::integer(1), L())));
  CHECK(r2.value == Value::integer(1));
  CHECK(r2.context.cur == H());

  auto r3 = val(rt::unlabel({M(), {}}, LabeledValue(Value::integer(0), M())));
  CHECK(r3.context.cur == M());
}

TEST_CASE("label checks the flow and leaves the current label alone") {
  auto ok = val(rt::label({L(), {}}, Value::integer(5), H()));
  CHECK(ok.value.tag() == H());
  CHECK(ok.value.data_tcb() == Value::integer(5));
  CHECK(ok.context.cur == L());

  auto bad = rt::label({H(), {}}, Value::integer(5), L(), 3);
  CHECK(err(bad).kind == IfcErrorKind::InvalidLabel);
  CHECK(err(bad).message == "invalid label");
  CHECK(err(bad).site == 3);

  CHECK(rt::ok(rt::label({M(), {}}, Value::unit(), M())));

  // clearance additionally bounds the target label
  auto blocked = rt::label({L(), M()}, Value::integer(1), H());
  CHECK(err(blocked).kind == IfcErrorKind::ClearanceViolation);
}

TEST_CASE("to_labeled protects the result and restores the label") {
  // cmp unlabels a High value and returns 1
  auto r = val(rt::to_labeled({L(), {}}, [](IfcContext c) -> rt::Res<std::pair<Value, IfcContext>> {
    auto u = rt::unlabel(c, LabeledValue(Value::integer(1), H()));
    auto& ur = std::get<rt::UnlabelResult>(u);
    return std::pair{ur.value, ur.context};
  }));
  CHECK(r.value.tag() == H());
  CHECK(r.value.data_tcb() == Value::integer(1));
  CHECK(r.context.cur == L());

  // pure computation: result tagged at the unchanged current label
  auto pure = val(rt::to_labeled({M(), {}}, [](IfcContext c) -> rt::Res<std::pair<Value, IfcContext>> {
    return std::pair{Value::integer(42), c};
  }));
  CHECK(pure.value.tag() == M());
  CHECK(pure.context.cur == M());

  // nested: inner raises to High, outer to Medium
  auto nested = val(rt::to_labeled({L(), {}}, [](IfcContext c0) -> rt::Res<std::pair<Value, IfcContext>> {
    auto inner = rt::to_labeled(c0, [](IfcContext c1) -> rt::Res<std::pair<Value, IfcContext>> {
      auto u = rt::unlabel(c1, LabeledValue(Value::integer(9), H()));
      auto& ur = std::get<rt::UnlabelResult>(u);
      return std::pair{ur.value, ur.context};
    });
    auto& ir = std::get<rt::LabelResult>(inner);
    // outer cmp then raises to Medium before returning
    auto raised = rt::raise(ir.context, M());
    return std::pair{Value::labeled(std::make_shared<const LabeledValue>(ir.value)),
                     std::get<IfcContext>(raised)};
  }));
  CHECK(nested.value.tag() == M());
  CHECK(nested.context.cur == L());
  const auto& innerv = nested.value.data_tcb();
  REQUIRE(innerv.is_labeled());
  CHECK(innerv.as_labeled()->tag() == H());

  // errors from cmp propagate
  auto failing = rt::to_labeled({H(), {}}, [](IfcContext c) -> rt::Res<std::pair<Value, IfcContext>> {
    auto r2 = rt::label(c, Value::integer(0), L(), 7);
    return std::get<IfcError>(r2);
  });
  CHECK(err(failing).kind == IfcErrorKind::InvalidLabel);
}

TEST_CASE("random op sequences keep the runtime invariants") {
  std::mt19937_64 rng(2024);
  auto elems = tri.elements();
  auto any_label = [&] { return elems[rng() % elems.size()]; };

  for (int trial = 0; trial < 2000; ++trial) {
    bool with_clearance = rng() % 4 == 0;
    IfcContext ctx{L(), with_clearance ? std::optional<Label>(H()) : std::nullopt};

    for (int step = 0; step < 12; ++step) {
      Label before = ctx.cur;
      switch (rng() % 4) {
        case 0: {  // raise
          auto r = rt::raise(ctx, any_label());
          if (rt::ok(r)) ctx = std::get<IfcContext>(r);
          break;
        }
        case 1: {  // label: never moves cur
          auto r = rt::label(ctx, Value::integer(1), any_label());
          if (rt::ok(r)) {
            CHECK(std::get<rt::LabelResult>(r).context.cur == before);
            ctx = std::get<rt::LabelResult>(r).context;
          }
          break;
        }
        case 2: {  // unlabel: cur becomes join(cur, tag)
          Label tag = any_label();
          auto r = rt::unlabel(ctx, LabeledValue(Value::integer(0), tag));
          if (rt::ok(r)) {
            auto& ur = std::get<rt::UnlabelResult>(r);
            CHECK(ur.context.cur == tri.join(before, tag));
            ctx = ur.context;
          }
          break;
        }
        case 3: {  // to_labeled: restores cur exactly
          Label tag = any_label();
          auto r = rt::to_labeled(ctx, [&](IfcContext c) -> rt::Res<std::pair<Value, IfcContext>> {
            auto u = rt::unlabel(c, LabeledValue(Value::integer(0), tag));
            if (!rt::ok(u)) return std::get<IfcError>(u);
            auto& ur = std::get<rt::UnlabelResult>(u);
            return std::pair{ur.value, ur.context};
          });
          if (rt::ok(r)) {
            CHECK(std::get<rt::LabelResult>(r).context.cur == before);
            ctx = std::get<rt::LabelResult>(r).context;
          }
          break;
        }
      }
      // monotone outside to_labeled's restore, and clearance always respected
      CHECK(tri.can_flow(before, ctx.cur));
      CHECK(ctx.valid());
    }
  }
}
