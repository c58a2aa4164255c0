#include "ifc/parse.hpp"
#include "ifc/print.hpp"
#include "ifc/typecheck.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ifc;
using namespace ifc::dsl;

namespace {

LatticePtr tri() {
  static LatticePtr l = make_lattice("trilevel");
  return l;
}

const char* kEqLabeled = R"(
(def eqLabeled ((v1 (Labeled Int)) (v2 (Labeled Int)))
  (let i1 (unlabel v1)
    (let i2 (unlabel v2)
      (= i1 i2))))
)";

const char* kCheckLabeled = R"(
(def eqLabeled ((v1 (Labeled Int)) (v2 (Labeled Int)))
  (let i1 (unlabel v1) (let i2 (unlabel v2) (= i1 i2))))

(def checkLabeled ((l Label) (i Int) (lv (Labeled Int)))
  :pre (canflow cur l)
  (let lvp (label i l @1)
    (call eqLabeled lv lvp)))
)";

// touches every term form and every type constructor
const char* kEverything = R"(
(def helper ((n Int)) (+ n 1))

(def resid ((v Int)) (unlabel (label! v High @9)))

(def every ((x Int) (b Bool) (u Unit) (l Label) (lv (Labeled Int)) (xs (List Int)) (pr (Pair Int Bool)))
  (let y (call helper x)
  (let bb true
  (let uu unit
  (let lw (label (if b 1 0) (join l Low) @7)
  (let q (unlabel (eraselabeled l lw))
  (let n (matchlist (cons y xs) 0 (hd tl (+ hd 0)))
  (let p (pair (fst pr) (snd pr))
  (let g (tolabeled helper y)
  (let cc (canflow (getcurrent) l)
  (let tcb (setcurrent! Low)
  (let nl (nil Bool)
  (if (and cc (or bb (not (= q 0)))) (unlabel g) (- n (* x 2)))))))))))))))
)";

}  // namespace

TEST_CASE("parsing the smallest definitions") {
  Program p = parse("(def id ((x Int)) x)", tri());
  REQUIRE(p.functions.size() == 1);
  CHECK(p.functions[0].name == "id");
  CHECK(p.functions[0].body->kind == TermKind::Var);
  CHECK(p.functions[0].body->name == "x");

  Program q = parse("(def f () (label 5 High @1))", tri());
  CHECK(q.functions[0].body->kind == TermKind::LabelOp);
  CHECK(q.functions[0].body->site == 1);
  CHECK(q.max_site == 1);
}

TEST_CASE("parse errors carry position and kind") {
  CHECK_THROWS_AS(parse("(def f () (label 5))", tri()), ParseError);          // arity
  CHECK_THROWS_AS(parse("(def f () y)", tri()), ParseError);                  // unbound variable
  CHECK_THROWS_AS(parse("(def f () 1) (def f () 2)", tri()), UsageError);     // duplicate name
  CHECK_THROWS_AS(parse("(def f () (bogus 1))", tri()), ParseError);          // unknown form
  CHECK_THROWS_AS(parse("", tri()), ParseError);
  CHECK_THROWS_AS(parse("(def f () (label 1 Low @2) (label 2 Low @2))", tri()), ParseError);
  try {
    parse("(def f ()\n  (label 5))", tri());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("site ids auto-assign in pre-order, skipping explicit ones") {
  Program p = parse(R"(
(def f ((l Label) (v Int))
  (let a (label v l)
  (let b (label v l @1)
  (let c (label v l)
  unit))))
)",
                    tri());
  std::vector<int> sites = sites_of(p);
  REQUIRE(sites.size() == 3);
  CHECK(sites[0] == 2);  // first auto id skips the explicit 1
  CHECK(sites[1] == 1);
  CHECK(sites[2] == 3);
}

TEST_CASE("calls must resolve at parse time") {
  CHECK_THROWS_AS(parse("(def f () (call missing 1))", tri()), UsageError);
  CHECK_THROWS_AS(parse("(def f () (tolabeled missing))", tri()), UsageError);
}

TEST_CASE("preconditions parse as canflow atoms over cur and label params") {
  Program p = parse(kCheckLabeled, tri());
  const FunctionDef& fn = p.functions[1];
  REQUIRE(fn.pre.size() == 1);
  CHECK(fn.pre[0].lhs == PreAtom::Side::Cur);
  CHECK(fn.pre[0].rhs == PreAtom::Side::Param);
  CHECK(fn.pre[0].rhs_name == "l");

  Program q = parse(R"(
(def g ((a Label) (b Label))
  :pre (and (canflow cur a) (canflow a b) (canflow Low b))
  unit)
)",
                    tri());
  REQUIRE(q.functions[0].pre.size() == 3);
  CHECK(q.functions[0].pre[1].lhs == PreAtom::Side::Param);
  CHECK(q.functions[0].pre[2].lhs == PreAtom::Side::Lit);

  // a non-Label parameter cannot appear in a precondition
  CHECK_THROWS_AS(parse("(def h ((x Int)) :pre (canflow cur x) unit)", tri()), ParseError);
}

TEST_CASE("typechecker accepts the overview clients") {
  TypedProgram tp = typecheck(parse(kEqLabeled, tri()));
  CHECK(tp.fn_return[0] == TypeExpr::boolean());

  TypedProgram tc = typecheck(parse(kCheckLabeled, tri()));
  CHECK(tc.fn_return[1] == TypeExpr::boolean());
}

TEST_CASE("typechecker rejects ill-typed clients") {
  CHECK_THROWS_AS(typecheck(parse("(def f ((x Int)) (unlabel x))", tri())), TypeError);
  CHECK_THROWS_AS(typecheck(parse("(def f ((b Bool)) (if b 1 true))", tri())), TypeError);
  CHECK_THROWS_AS(typecheck(parse("(def f ((lv (Labeled Int)) (l Label)) (label lv l))", tri())),
                  TypeError);
  CHECK_THROWS_AS(typecheck(parse("(def f ((b Bool)) (+ b 1))", tri())), TypeError);
  CHECK_THROWS_AS(parse("(def f ((x (Labeled (Labeled Int)))) 1)", tri()), ParseError);
  // tolabeled of a Labeled-returning function would nest protection
  CHECK_THROWS_AS(typecheck(parse(R"(
(def mk ((l Label)) (label 1 l @1))
(def f ((l Label)) (tolabeled mk l))
)",
                                  tri())),
                  TypeError);
}

TEST_CASE("return types of recursive functions are inferred") {
  TypedProgram tp = typecheck(parse(R"(
(def len ((xs (List Int)))
  (matchlist xs 0 (hd tl (+ 1 (call len tl)))))
)",
                                    tri()));
  CHECK(tp.fn_return[0] == TypeExpr::intt());

  // mutually recursive with no ground branch: unresolvable
  CHECK_THROWS_AS(typecheck(parse(R"(
(def a ((n Int)) (call b n))
(def b ((n Int)) (call a n))
)",
                                  tri())),
                  TypeError);
}

TEST_CASE("pretty print round-trips, site ids included") {
  for (const char* src : {kEqLabeled, kCheckLabeled, kEverything}) {
    Program p = parse(src, tri());
    std::string text = pretty_print(p);
    Program q = parse(text, tri());
    CHECK(p == q);
    CHECK(pretty_print(q) == text);
    CHECK(program_hash(p) == program_hash(q));
    CHECK(sites_of(p) == sites_of(q));
  }
}

TEST_CASE("site ids are deterministic from source") {
  Program a = parse(kEverything, tri());
  Program b = parse(kEverything, tri());
  CHECK(a == b);
  CHECK(sites_of(a) == sites_of(b));
}

TEST_CASE("typed everything-program annotates all nodes") {
  TypedProgram tp = typecheck(parse(kEverything, tri()));
  CHECK(tp.node_type.size() == static_cast<std::size_t>(tp.program.node_count));
  // the frame of `every` holds 7 params + 11 lets + 2 match binders
  int every = tp.program.index_of("every");
  CHECK(tp.frame_size[every] == 7 + 11 + 2);
}

TEST_CASE("powerset label literals parse inside programs") {
  auto ps = make_lattice("powerset:alpha,beta");
  Program p = parse("(def f () (label 1 {alpha,beta} @1))", ps);
  const Term& body = *p.functions[0].body;
  CHECK(body.kids[1]->kind == TermKind::LabelLit);
  CHECK(ps->show(*body.kids[1]->label_val) == "{alpha,beta}");
  Program q = parse(pretty_print(p), ps);
  CHECK(p == q);
}

TEST_CASE("value_matches ties runtime values to types") {
  CHECK(value_matches(Value::integer(3), TypeExpr::intt()));
  CHECK_FALSE(value_matches(Value::integer(3), TypeExpr::boolean()));
  CHECK(value_matches(Value::hole(), TypeExpr::labeled(TypeExpr::intt())));
  Label low = tri()->element(0);
  CHECK(value_matches(Value::labeled(Value::integer(1), low), TypeExpr::labeled(TypeExpr::intt())));
  CHECK(value_matches(Value::cons(Value::integer(1), Value::nil()),
                      TypeExpr::list(TypeExpr::intt())));
  CHECK_FALSE(value_matches(Value::cons(Value::boolean(true), Value::nil()),
                            TypeExpr::list(TypeExpr::intt())));
}
