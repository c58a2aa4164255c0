#include "ifc/ni.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

using namespace ifc;
using namespace ifc::dsl;
using namespace ifc::ni;

namespace {

LatticePtr tri() {
  static LatticePtr l = make_lattice("trilevel");
  return l;
}
Label L() { return tri()->element(0); }
Label H() { return tri()->element(2); }

TypedProgram compile(const char* src) { return typecheck(parse(src, tri())); }

const char* kEqLabeled = R"(
(def eqLabeled ((v1 (Labeled Int)) (v2 (Labeled Int)))
  (let i1 (unlabel v1) (let i2 (unlabel v2) (= i1 i2))))
)";

const char* kCheckLabeled = R"(
(def eqLabeled ((v1 (Labeled Int)) (v2 (Labeled Int)))
  (let i1 (unlabel v1) (let i2 (unlabel v2) (= i1 i2))))

(def checkLabeled ((l Label) (i Int) (lv (Labeled Int)))
  :pre (canflow cur l)
  (let lvp (label i l @1)
    (call eqLabeled lv lvp)))
)";

}  // namespace

TEST_CASE("theorem generation quantifies parameters, levels and contexts") {
  auto tp = compile(kEqLabeled);
  NITheorem t = gen_ni_theorem(tp, "eqLabeled");
  CHECK(t.erased_entry == "eqLabeled_erased");
  CHECK(t.levels.size() == 3);
  REQUIRE(t.param_domains.size() == 2);
  CHECK(t.param_domains[0].size() == 9);  // 3 payloads x 3 tags
  CHECK(t.contexts.size() == 9);          // 3 bare curs + 6 valid clearance pairs

  auto nullary = compile("(def f () 42)");
  NITheorem tn = gen_ni_theorem(nullary, "f");
  CHECK(tn.param_domains.empty());
  CHECK(check_ni(tn).passed);
}

TEST_CASE("the overview clients are noninterferent on the full grid") {
  auto tp = compile(kEqLabeled);
  NIReport r = check_ni(gen_ni_theorem(tp, "eqLabeled"));
  CHECK(r.passed);
  CHECK(r.cases >= 1000);
  CHECK(r.inconclusive == 0);

  auto tc = compile(kCheckLabeled);
  NIReport rc = check_ni(gen_ni_theorem(tc, "checkLabeled"));
  CHECK(rc.passed);
  CHECK(rc.cases >= 1000);
  CHECK(rc.filtered > 0);  // the precondition rejected the rest of the grid
}

TEST_CASE("a trusted-base leak is caught with a minimal counterexample") {
  auto tp = compile(R"(
(def leak ((x (Labeled Int)))
  (let v (unlabel x)
  (let d (setcurrent! Low)
  v)))
)");
  NITheorem t = gen_ni_theorem(tp, "leak");
  NIReport r = check_ni(t);
  REQUIRE_FALSE(r.passed);
  REQUIRE(r.counterexample.has_value());
  const Counterexample& c = *r.counterexample;

  // replayable and already minimal
  CHECK(case_fails(t, c));
  Counterexample again = shrink(t, c);
  CHECK(again.level == c.level);
  CHECK(again.args[0] == c.args[0]);

  // the shrinker drove everything to the small end of the grid
  CHECK(c.level == L());
  CHECK(c.context.cur == L());
  REQUIRE(c.args[0].is_labeled());
  CHECK(c.args[0].as_labeled()->data_tcb() == Value::integer(0));
  CHECK(c.lhs_view != c.rhs_view);
}

TEST_CASE("a deleted label check is caught") {
  // the mutant runtime dropped enforcement from one executable: strip the
  // checks from the erased copy and the failure channels diverge
  auto tp = compile(R"(
(def publish ((l Label) (i Int)) (unlabel (label i l @1)))
)");
  NITheorem t = gen_ni_theorem(tp, "publish");
  std::function<TermPtr(const Term&)> strip = [&](const Term& term) -> TermPtr {
    Term out = term;
    out.kids.clear();
    for (const auto& k : term.kids) out.kids.push_back(strip(*k));
    if (out.kind == TermKind::LabelOp) out.checked = false;
    return mk(std::move(out));
  };
  Program mutated = t.erased.program;
  for (auto& fn : mutated.functions)
    if (fn.name == t.erased_entry) fn.body = strip(*fn.body);
  t.erased = typecheck(finalize(std::move(mutated)));

  NIReport r = check_ni(t);
  REQUIRE_FALSE(r.passed);
  REQUIRE(r.counterexample.has_value());
  CHECK(case_fails(t, *r.counterexample));
  CHECK((r.counterexample->lhs_view == "InvalidLabel" ||
         r.counterexample->rhs_view == "InvalidLabel"));
}

TEST_CASE("a tag-swapping eraser is caught") {
  auto tp = compile(kEqLabeled);
  NITheorem t = gen_ni_theorem(tp, "eqLabeled");

  interp::EvalHooks mutant;
  mutant.erase_labeled_impl = [](Label level, const LabeledValue& lv) {
    // wrong on purpose: stamps the erasure level over the original tag
    if (level.owner->can_flow(lv.tag(), level))
      return LabeledValue(lv.data_tcb(), level);
    return LabeledValue(Value::hole(), level);
  };
  NIReport r = check_ni(t, Strategy::exhaustive(), interp::kDefaultFuel, &mutant);
  REQUIRE_FALSE(r.passed);
  REQUIRE(r.counterexample.has_value());
  CHECK(case_fails(t, *r.counterexample, interp::kDefaultFuel, &mutant));
  // without the mutation the same case agrees
  CHECK_FALSE(case_fails(t, *r.counterexample));
}

TEST_CASE("failure-channel divergence counts as interference") {
  // the label check fires only on the branch a secret chose
  auto tp = compile(R"(
(def f ((s (Labeled Bool)))
  (if (unlabel s) (unlabel (label 1 Low @1)) 0))
)");
  NIReport r = check_ni(gen_ni_theorem(tp, "f"));
  REQUIRE_FALSE(r.passed);
  CHECK((r.counterexample->lhs_view == "InvalidLabel" ||
         r.counterexample->rhs_view == "InvalidLabel"));
}

TEST_CASE("the recorder client holds up on its own diamond lattice") {
  auto lat = make_lattice("powerset:computer,engine");
  auto tp = typecheck(parse(R"(
(def post ((actor Label) (data Int))
  :pre (canflow cur actor)
  (label data actor @1))
(def log ((a Label) (b Label) (x Int))
  :pre (and (canflow cur a) (canflow a b))
  (unlabel (call post b (+ x 1))))
)",
                            lat));
  NIReport r = check_ni(gen_ni_theorem(tp, "log"), Strategy::random(5, 1500));
  CHECK(r.passed);
  CHECK(r.cases > 0);
}

TEST_CASE("random strategy replays deterministically") {
  auto tp = compile(kEqLabeled);
  NITheorem t = gen_ni_theorem(tp, "eqLabeled");
  NIReport a = check_ni(t, Strategy::random(99, 2000));
  NIReport b = check_ni(t, Strategy::random(99, 2000));
  CHECK(a.passed);
  CHECK(a.cases == b.cases);
  CHECK(a.filtered == b.filtered);
}

TEST_CASE("programs that never touch labels always pass") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    // a random little arithmetic function over two ints
    auto op = [&](int depth) {
      std::string expr;
      std::function<std::string(int)> go = [&](int d) -> std::string {
        switch (rng() % (d > 2 ? 3 : 6)) {
          case 0: return "a";
          case 1: return "b";
          case 2: return std::to_string(rng() % 5);
          case 3: return "(+ " + go(d + 1) + " " + go(d + 1) + ")";
          case 4: return "(* " + go(d + 1) + " " + go(d + 1) + ")";
          default:
            return "(if (< " + go(d + 1) + " " + go(d + 1) + ") " + go(d + 1) + " " +
                   go(d + 1) + ")";
        }
      };
      return go(depth);
    };
    std::string src = "(def f ((a Int) (b Int)) " + op(0) + ")";
    auto tp = compile(src.c_str());
    NIReport r = check_ni(gen_ni_theorem(tp, "f"));
    INFO(src);
    CHECK(r.passed);
  }
}

TEST_CASE("erase_ctx agrees with the labeled-result projection") {
  // projecting (v, c) at l must match erasing the labeled value {v @ c.cur}
  std::mt19937_64 rng(17);
  auto elems = tri()->elements();
  for (int i = 0; i < 2000; ++i) {
    Value v = Value::integer(static_cast<std::int64_t>(rng() % 100));
    if (rng() % 3 == 0) v = Value::labeled(Value::integer(1), elems[rng() % 3]);
    IfcContext ctx{elems[rng() % 3], {}};
    for (Label l : elems) {
      Value via_ctx = erasure::erase_ctx(l, v, ctx);
      LabeledValue boxed(v, ctx.cur);
      Value via_labeled = erasure::erase_labeled(l, boxed).data_tcb();
      CHECK(via_ctx == via_labeled);
    }
  }
}

TEST_CASE("reports serialize with entry, strategy, cases and verdict") {
  auto tp = compile(kEqLabeled);
  NITheorem t = gen_ni_theorem(tp, "eqLabeled");
  Strategy s = Strategy::exhaustive();
  auto j = report_to_json(check_ni(t, s), t, s);
  CHECK(j["entry"] == "eqLabeled");
  CHECK(j["strategy"] == "exhaustive");
  CHECK(j["verdict"] == "pass");
  CHECK(j["cases"].get<std::uint64_t>() >= 1000);
}
