#include "ifc/interp.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "ifc/parse.hpp"

using namespace ifc;
using namespace ifc::dsl;

namespace {

LatticePtr tri() {
  static LatticePtr l = make_lattice("trilevel");
  return l;
}
Label L() { return tri()->element(0); }
Label M() { return tri()->element(1); }
Label H() { return tri()->element(2); }

TypedProgram compile(const char* src) { return typecheck(parse(src, tri())); }

IfcOutcome run(const TypedProgram& tp, const char* entry, std::vector<Value> args,
               IfcContext ctx, const EnforcementMode& mode = EnforcementMode::dynamic(),
               std::uint64_t fuel = interp::kDefaultFuel) {
  return interp::eval(tp, entry, std::move(args), ctx, mode, fuel);
}

}  // namespace

TEST_CASE("label then unlabel raises to the tag") {
  auto tp = compile("(def f () (unlabel (label 5 High @1)))");
  auto out = run(tp, "f", {}, {L(), {}});
  REQUIRE(out.ok());
  CHECK(out.success().value == Value::integer(5));
  CHECK(out.success().context.cur == H());
}

TEST_CASE("labelling below the current label fails dynamically") {
  auto tp = compile("(def f () (label 1 Low @4))");
  auto out = run(tp, "f", {}, {H(), {}});
  REQUIRE_FALSE(out.ok());
  CHECK(out.error().kind == IfcErrorKind::InvalidLabel);
  CHECK(out.error().site == 4);
  CHECK(out.error().message == "invalid label");
}

TEST_CASE("tolabeled protects the sensitive read and restores the label") {
  auto tp = compile(R"(
(def g ((x (Labeled Int))) (unlabel x))
(def f ((x (Labeled Int))) (tolabeled g x))
)");
  auto out = run(tp, "f", {Value::labeled(Value::integer(9), H())}, {L(), {}});
  REQUIRE(out.ok());
  CHECK(out.success().context.cur == L());
  REQUIRE(out.success().value.is_labeled());
  CHECK(out.success().value.as_labeled()->tag() == H());
  CHECK(out.success().value.as_labeled()->data_tcb() == Value::integer(9));
}

TEST_CASE("nested tolabeled wraps at each inner level and restores") {
  auto tp = compile(R"(
(def inner ((x (Labeled Int))) (unlabel x))
(def mid ((x (Labeled Int)))
  (let boxed (tolabeled inner x)
  (let bump (unlabel (label 1 Medium @1))
  bump)))
(def outer ((x (Labeled Int))) (tolabeled mid x))
)");
  // inner raises to High but is bracketed; mid itself raises to Medium,
  // so the outer wrapper tags at Medium and the caller stays put
  auto out = run(tp, "outer", {Value::labeled(Value::integer(5), H())}, {L(), {}});
  REQUIRE(out.ok());
  CHECK(out.success().context.cur == L());
  REQUIRE(out.success().value.is_labeled());
  CHECK(out.success().value.as_labeled()->tag() == M());
}

TEST_CASE("holes absorb through primitives, branches and projections") {
  auto hole_in = Value::labeled(Value::hole(), H());
  auto tp = compile(R"(
(def plus ((x (Labeled Int))) (+ (unlabel x) 3))
(def eq ((x (Labeled Int))) (= (unlabel x) 42))
(def branch ((x (Labeled Bool))) (if (unlabel x) 1 2))
(def untag ((x (Labeled Int))) (unlabel x))
)");
  auto plus = run(tp, "plus", {hole_in}, {L(), {}});
  REQUIRE(plus.ok());
  CHECK(plus.success().value.is_hole());

  auto eq = run(tp, "eq", {hole_in}, {L(), {}});
  CHECK(eq.success().value.is_hole());

  auto branch = run(tp, "branch", {Value::labeled(Value::hole(), H())}, {L(), {}});
  CHECK(branch.success().value.is_hole());

  // unlabelling an erased payload still raises the label: tags are public
  auto untag = run(tp, "untag", {hole_in}, {L(), {}});
  CHECK(untag.success().value.is_hole());
  CHECK(untag.success().context.cur == H());
}

TEST_CASE("hole-typed primitive applications absorb directly") {
  CHECK(interp::eval_hole_prim(PrimOp::Add, {Value::hole(), Value::integer(3)}) == Value::hole());
  CHECK(interp::eval_hole_prim(PrimOp::Eq, {Value::hole(), Value::integer(42)}) == Value::hole());
  CHECK(interp::eval_hole_prim(PrimOp::Mul, {Value::integer(0), Value::hole()}) == Value::hole());
  CHECK_FALSE(interp::eval_hole_prim(PrimOp::Add, {Value::integer(1), Value::integer(2)})
                  .has_value());
}

TEST_CASE("fuel bounds recursion and is monotone") {
  auto tp = compile(R"(
(def spin ((n Int)) (if (< n 0) 0 (call spin (+ n 1))))
(def count ((n Int)) (if (< n 1) 0 (+ 1 (call count (- n 1)))))
)");
  auto spun = run(tp, "spin", {Value::integer(0)}, {L(), {}}, EnforcementMode::dynamic(), 1000);
  REQUIRE_FALSE(spun.ok());
  CHECK(spun.error().kind == IfcErrorKind::FuelExhausted);

  auto ten = run(tp, "count", {Value::integer(10)}, {L(), {}}, EnforcementMode::dynamic(), 11);
  REQUIRE(ten.ok());
  CHECK(ten.success().value == Value::integer(10));
  for (std::uint64_t fuel : {12ull, 100ull, 100000ull}) {
    auto again = run(tp, "count", {Value::integer(10)}, {L(), {}}, EnforcementMode::dynamic(), fuel);
    CHECK(interp::outcome_equal(ten, again));
  }
  auto starved = run(tp, "count", {Value::integer(10)}, {L(), {}}, EnforcementMode::dynamic(), 10);
  CHECK_FALSE(starved.ok());
}

TEST_CASE("eval is deterministic") {
  auto tp = compile(R"(
(def f ((x (Labeled Int)) (l Label))
  (let a (unlabel x)
    (unlabel (tolabeled g a l))))
(def g ((a Int) (l Label)) (unlabel (label (* a 2) l @1)))
)");
  std::vector<Value> args{Value::labeled(Value::integer(21), M()), Value::label(H())};
  auto first = run(tp, "f", args, {L(), {}});
  for (int i = 0; i < 5; ++i) CHECK(interp::outcome_equal(first, run(tp, "f", args, {L(), {}})));
}

TEST_CASE("final label equals the fold of unlabeled tags outside tolabeled") {
  auto tp = compile(R"(
(def inner ((a (Labeled Int))) (unlabel a))
(def f ((x (Labeled Int)) (y (Labeled Int)) (z (Labeled Int)))
  (let a (unlabel x)
  (let b (tolabeled inner y)
  (let c (unlabel z)
  (+ a c)))))
)");
  std::vector<Label> outside;
  interp::EvalHooks hooks;
  hooks.on_unlabel = [&](Label tag, int depth) {
    if (depth == 0) outside.push_back(tag);
  };
  IfcContext ctx{L(), {}};
  auto out = interp::eval(tp, "f",
                          {Value::labeled(Value::integer(1), M()),
                           Value::labeled(Value::integer(2), H()),
                           Value::labeled(Value::integer(3), L())},
                          ctx, EnforcementMode::dynamic(), interp::kDefaultFuel, &hooks);
  REQUIRE(out.ok());
  Label folded = L();
  for (Label t : outside) folded = tri()->join(folded, t);
  CHECK(out.success().context.cur == folded);
  CHECK(folded == M());  // the High unlabel happened inside tolabeled
}

TEST_CASE("entry preconditions gate the run in every mode") {
  auto tp = compile(R"(
(def f ((l Label) (v Int))
  :pre (canflow cur l)
  (label v l @1))
)");
  auto ok = run(tp, "f", {Value::label(M()), Value::integer(1)}, {L(), {}});
  CHECK(ok.ok());
  auto blocked = run(tp, "f", {Value::label(L()), Value::integer(1)}, {M(), {}});
  REQUIRE_FALSE(blocked.ok());
  CHECK(blocked.error().kind == IfcErrorKind::PreconditionUnsatisfied);
}

TEST_CASE("modes agree on fully proved programs") {
  auto tp = compile(R"(
(def mk ((l Label) (v Int))
  :pre (canflow cur l)
  (label v l @1))
(def f ((l Label) (v Int))
  :pre (canflow cur l)
  (unlabel (call mk l v)))
)");
  auto cert = std::make_shared<an::Certificate>(an::analyze(tp));
  REQUIRE(cert->fully_proved());

  std::vector<Value> args{Value::label(M()), Value::integer(7)};
  IfcContext ctx{L(), {}};
  auto d = run(tp, "f", args, ctx);
  auto s = run(tp, "f", args, ctx, an::static_residual_mode(cert));
  auto g = run(tp, "f", args, ctx, an::ghost_mode(cert));
  REQUIRE(d.ok());
  CHECK(interp::outcome_equal(d, s));
  REQUIRE(g.ok());
  CHECK(strip_labels(d.success().value) == g.success().value);
  CHECK(g.success().context.cur == ctx.cur);  // reporting context only
}

TEST_CASE("ghost mode refuses what it cannot run") {
  auto tp = compile("(def f () (getcurrent))");
  auto cert = std::make_shared<an::Certificate>(an::analyze(tp));
  CHECK_THROWS_AS(run(tp, "f", {}, {L(), {}}, an::ghost_mode(cert)), UsageError);

  auto tp2 = compile("(def f ((v Int)) v)");
  auto cert2 = std::make_shared<an::Certificate>(an::analyze(tp2));
  CHECK_THROWS_AS(run(tp2, "f", {Value::integer(1)}, {L(), H()}, an::ghost_mode(cert2)),
                  UsageError);

  // not-fully-proved programs cannot even construct the mode
  auto leaky = compile("(def f ((l Label) (v Int)) (label v l @3))");
  auto cert3 = std::make_shared<an::Certificate>(an::analyze(leaky));
  REQUIRE_FALSE(cert3->fully_proved());
  CHECK_THROWS_WITH(an::ghost_mode(cert3), Catch::Matchers::ContainsSubstring("3"));
}

TEST_CASE("certificates are tied to the program by hash") {
  auto tp = compile("(def f ((l Label) (v Int)) (label v l @1))");
  auto other = compile("(def f ((l Label) (v Int)) (label (+ v 1) l @1))");
  auto cert = std::make_shared<an::Certificate>(an::analyze(other));
  CHECK_THROWS_AS(
      run(tp, "f", {Value::label(H()), Value::integer(1)}, {L(), {}},
          an::static_residual_mode(cert)),
      UsageError);
}

TEST_CASE("a deleted check lets an invalid labelling through") {
  auto tp = compile("(def f ((v (Labeled Int))) (label! (unlabel v) Low @1))");
  auto out = run(tp, "f", {Value::labeled(Value::integer(5), H())}, {L(), {}});
  REQUIRE(out.ok());  // the guard is gone; the secret now wears a Low tag
  CHECK(out.success().value.as_labeled()->tag() == L());
}

TEST_CASE("usage errors are not IFC outcomes") {
  auto tp = compile("(def f ((v Int)) v)");
  CHECK_THROWS_AS(run(tp, "missing", {}, {L(), {}}), UsageError);
  CHECK_THROWS_AS(run(tp, "f", {}, {L(), {}}), UsageError);
  CHECK_THROWS_AS(run(tp, "f", {Value::boolean(true)}, {L(), {}}), UsageError);
  // a clearance-violating entry context is malformed input
  CHECK_THROWS_AS(run(tp, "f", {Value::integer(1)}, {H(), L()}), UsageError);
}

TEST_CASE("setcurrent! lowers the label for leak fixtures") {
  auto tp = compile(R"(
(def leak ((x (Labeled Int)))
  (let v (unlabel x)
  (let d (setcurrent! Low)
  v)))
)");
  auto out = run(tp, "leak", {Value::labeled(Value::integer(3), H())}, {L(), {}});
  REQUIRE(out.ok());
  CHECK(out.success().value == Value::integer(3));
  CHECK(out.success().context.cur == L());  // the secret escaped at Low
}
