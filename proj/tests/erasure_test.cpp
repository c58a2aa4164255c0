#include "ifc/erasure.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "ifc/interp.hpp"
#include "ifc/parse.hpp"
#include "ifc/print.hpp"

using namespace ifc;
using namespace ifc::dsl;
using namespace ifc::erasure;

namespace {

LatticePtr tri() {
  static LatticePtr l = make_lattice("trilevel");
  return l;
}
Label L() { return tri()->element(0); }
Label M() { return tri()->element(1); }
Label H() { return tri()->element(2); }

Value lv(Value data, Label tag) { return Value::labeled(std::move(data), tag); }

/// Random values over the full grammar, for the algebra properties.
Value sample_value(std::mt19937_64& rng, int depth = 0) {
  auto elems = tri()->elements();
  switch (rng() % (depth > 2 ? 5 : 8)) {
    case 0: return Value::integer(static_cast<std::int64_t>(rng() % 7) - 3);
    case 1: return Value::boolean(rng() % 2 == 0);
    case 2: return Value::unit();
    case 3: return Value::label(elems[rng() % 3]);
    case 4: return Value::hole();
    case 5: {
      Value payload = sample_value(rng, depth + 1);
      while (payload.is_labeled()) payload = sample_value(rng, depth + 1);
      return lv(std::move(payload), elems[rng() % 3]);
    }
    case 6: {
      Value out = Value::nil();
      for (std::uint64_t i = rng() % 3; i > 0; --i)
        out = Value::cons(sample_value(rng, depth + 1), std::move(out));
      return out;
    }
    default:
      return Value::pair(sample_value(rng, depth + 1), sample_value(rng, depth + 1));
  }
}

}  // namespace

TEST_CASE("erase_labeled hides exactly the payloads above the level") {
  LabeledValue secret(Value::integer(5), H());
  LabeledValue low_view = erase_labeled(L(), secret);
  CHECK(low_view.data_tcb().is_hole());
  CHECK(low_view.tag() == H());

  LabeledValue open(Value::integer(5), L());
  LabeledValue high_view = erase_labeled(H(), open);
  CHECK(high_view.data_tcb() == Value::integer(5));
  CHECK(high_view.tag() == L());

  // recursion through a list payload
  LabeledValue nested(Value::cons(lv(Value::integer(1), H()), Value::nil()), L());
  LabeledValue erased = erase_labeled(L(), nested);
  REQUIRE(erased.data_tcb().is_list());
  const Value& head = erased.data_tcb().as_list()->head;
  CHECK(head.as_labeled()->data_tcb().is_hole());
  CHECK(head.as_labeled()->tag() == H());
}

TEST_CASE("erase_value is the structural homomorphism") {
  CHECK(erase_value(L(), Value::integer(7)) == Value::integer(7));
  CHECK(erase_value(L(), Value::label(H())) == Value::label(H()));

  Value mixed = Value::cons(lv(Value::integer(1), H()),
                            Value::cons(lv(Value::integer(2), L()), Value::nil()));
  Value out = erase_value(L(), mixed);
  CHECK(out.as_list()->head.as_labeled()->data_tcb().is_hole());
  CHECK(out.as_list()->tail->head.as_labeled()->data_tcb() == Value::integer(2));
}

TEST_CASE("erase_ctx cuts off results above the observation level") {
  CHECK(erase_ctx(L(), Value::integer(5), {H(), {}}).is_hole());
  CHECK(erase_ctx(H(), Value::integer(5), {L(), {}}) == Value::integer(5));
  Value out = erase_ctx(L(), lv(Value::integer(5), H()), {L(), {}});
  REQUIRE(out.is_labeled());
  CHECK(out.as_labeled()->data_tcb().is_hole());
  CHECK(out.as_labeled()->tag() == H());
}

TEST_CASE("erasure algebra: idempotent, monotone, tag-transparent, redundancy-tolerant") {
  std::mt19937_64 rng(11);
  auto elems = tri()->elements();
  for (int i = 0; i < 4000; ++i) {
    Value v = sample_value(rng);
    for (Label l : elems) {
      Value once = erase_value(l, v);
      CHECK(erase_value(l, once) == once);
      for (Label l2 : elems)
        if (tri()->can_flow(l, l2))
          CHECK(erase_value(l, erase_value(l2, v)) == erase_value(l, v));
    }
    LabeledValue wrapped(v.is_labeled() ? Value::integer(0) : v, elems[i % 3]);
    for (Label l : elems) {
      LabeledValue once = erase_labeled(l, wrapped);
      CHECK(once.tag() == wrapped.tag());
      LabeledValue twice = erase_labeled(l, once);
      CHECK(twice == once);
    }
  }
}

TEST_CASE("every built-in primitive is contaminant in every position") {
  const auto& reg = ContaminationRegistry::defaults();
  for (PrimOp op : {PrimOp::Add, PrimOp::Sub, PrimOp::Mul, PrimOp::Eq, PrimOp::Lt, PrimOp::And,
                    PrimOp::Or, PrimOp::Not})
    for (int i = 0; i < prim_arity(op); ++i) CHECK(reg.contaminates(op, i));
}

TEST_CASE("function erasure reproduces the two-client shape") {
  auto tp = typecheck(parse(R"(
(def eqLabeled ((v1 (Labeled Int)) (v2 (Labeled Int)))
  (let i1 (unlabel v1) (let i2 (unlabel v2) (= i1 i2))))

(def checkLabeled ((l Label) (i Int) (lv (Labeled Int)))
  :pre (canflow cur l)
  (let lvp (label i l @1)
    (call eqLabeled lv lvp)))
)",
                            tri()));
  ErasedProgram erased = erase_function(tp, "checkLabeled");
  const Program& p = erased.program;

  // originals untouched, erased copies appended, entry first
  REQUIRE(p.functions.size() == 4);
  CHECK(p.functions[0] == tp.program.functions[0]);
  CHECK(p.functions[1] == tp.program.functions[1]);
  CHECK(p.find("checkLabeled_erased") != nullptr);
  CHECK(p.find("eqLabeled_erased") != nullptr);  // pulled in by the call

  const FunctionDef& ce = *p.find("checkLabeled_erased");
  REQUIRE(ce.params.size() == 4);
  CHECK(ce.params[0].name == erased.level_param);
  CHECK(ce.params[0].type == TypeExpr::label());
  CHECK(ce.pre == tp.program.find("checkLabeled")->pre);

  // the printed body wraps each labeled subterm and passes the level along
  std::string text = print_term(*ce.body, *tri());
  CHECK(text.find("(eraselabeled " + erased.level_param) != std::string::npos);
  CHECK(text.find("call eqLabeled_erased " + erased.level_param) != std::string::npos);

  // fresh sites in the copy, originals kept
  std::vector<int> sites = sites_of(p);
  REQUIRE(sites.size() == 2);
  CHECK(sites[0] == 1);
  CHECK(sites[1] == 2);

  // the erased program typechecks and round-trips as source
  TypedProgram etp = typecheck(p);
  CHECK(parse(pretty_print(p), tri()) == p);

  // a label-free helper gains only the level parameter
  auto pure = typecheck(parse("(def add1 ((n Int)) (+ n 1))", tri()));
  ErasedProgram pe = erase_function(pure, "add1");
  const FunctionDef& ae = *pe.program.find("add1_erased");
  CHECK(term_equal(*ae.body, *pure.program.find("add1")->body));
}

TEST_CASE("erased run keeps tags but hides high payloads") {
  auto tp = typecheck(parse(R"(
(def firstOf ((xs (List (Labeled Int)))) (matchlist xs 0 (hd tl (unlabel hd))))
)",
                            tri()));
  ErasedProgram ep = erase_function(tp, "firstOf");
  TypedProgram etp = typecheck(ep.program);

  Value xs = Value::cons(lv(Value::integer(5), H()), Value::nil());
  auto plain = interp::eval(etp, "firstOf", {xs}, {L(), {}}, EnforcementMode::dynamic());
  auto erased = interp::eval(etp, "firstOf_erased", {Value::label(L()), xs}, {L(), {}},
                             EnforcementMode::dynamic());
  REQUIRE(plain.ok());
  REQUIRE(erased.ok());
  CHECK(plain.success().value == Value::integer(5));
  CHECK(erased.success().value.is_hole());
  // both runs raised the same label: the tag was public either way
  CHECK(plain.success().context.cur == erased.success().context.cur);
}
