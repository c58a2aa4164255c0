#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ifc/lattice.hpp"

namespace ifc {

struct Unit {
  friend bool operator==(const Unit&, const Unit&) = default;
};

/// The absorbing placeholder that stands for erased secret data.
struct Hole {
  friend bool operator==(const Hole&, const Hole&) = default;
};

class LabeledValue;
struct ConsCell;
struct PairCell;

using LabeledPtr = std::shared_ptr<const LabeledValue>;
using ListPtr = std::shared_ptr<const ConsCell>;  // null means nil
using PairPtr = std::shared_ptr<const PairCell>;

/// A runtime value of the client language. Values are immutable and share
/// structure freely.
class Value {
 public:
  using Rep = std::variant<Unit, Hole, std::int64_t, bool, Label, LabeledPtr, ListPtr, PairPtr>;

  Value() : rep_(Unit{}) {}
  explicit Value(Rep rep) : rep_(std::move(rep)) {}

  static Value unit() { return Value(Rep{Unit{}}); }
  static Value hole() { return Value(Rep{Hole{}}); }
  static Value integer(std::int64_t n) { return Value(Rep{n}); }
  static Value boolean(bool b) { return Value(Rep{b}); }
  static Value label(Label l) { return Value(Rep{l}); }
  static Value labeled(Value data, Label tag);
  static Value labeled(LabeledPtr lv) { return Value(Rep{std::move(lv)}); }
  static Value nil() { return Value(Rep{ListPtr{}}); }
  static Value cons(Value head, Value tail);
  static Value list(ListPtr l) { return Value(Rep{std::move(l)}); }
  static Value pair(Value first, Value second);

  bool is_unit() const { return std::holds_alternative<Unit>(rep_); }
  bool is_hole() const { return std::holds_alternative<Hole>(rep_); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(rep_); }
  bool is_bool() const { return std::holds_alternative<bool>(rep_); }
  bool is_label() const { return std::holds_alternative<Label>(rep_); }
  bool is_labeled() const { return std::holds_alternative<LabeledPtr>(rep_); }
  bool is_list() const { return std::holds_alternative<ListPtr>(rep_); }
  bool is_pair() const { return std::holds_alternative<PairPtr>(rep_); }

  std::int64_t as_int() const { return std::get<std::int64_t>(rep_); }
  bool as_bool() const { return std::get<bool>(rep_); }
  Label as_label() const { return std::get<Label>(rep_); }
  const LabeledPtr& as_labeled() const { return std::get<LabeledPtr>(rep_); }
  const ListPtr& as_list() const { return std::get<ListPtr>(rep_); }
  const PairPtr& as_pair() const { return std::get<PairPtr>(rep_); }

  const Rep& rep() const { return rep_; }

  friend bool operator==(const Value& a, const Value& b);
  friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }

 private:
  Rep rep_;
};

/// A protected datum: payload plus tag. The tag is public; the payload is
/// reachable only through unlabel and the erasure engine, which are the
/// trusted base of the toolkit.
class LabeledValue {
 public:
  LabeledValue(Value data, Label tag) : data_(std::move(data)), tag_(tag) {}

  const Label& tag() const { return tag_; }

  /// Trusted-base accessor: unlabel, the erasure engine, and harness
  /// fixtures only. Client-facing code must go through unlabel.
  const Value& data_tcb() const { return data_; }

  friend bool operator==(const LabeledValue& a, const LabeledValue& b) {
    return a.tag_ == b.tag_ && a.data_ == b.data_;
  }

 private:
  Value data_;
  Label tag_;
};

struct ConsCell {
  Value head;
  ListPtr tail;
};

struct PairCell {
  Value first;
  Value second;
};

inline Value Value::labeled(Value data, Label tag) {
  return Value(Rep{std::make_shared<const LabeledValue>(std::move(data), tag)});
}

inline Value Value::cons(Value head, Value tail) {
  if (!tail.is_list()) throw UsageError("cons onto a non-list value");
  return Value(Rep{std::make_shared<const ConsCell>(ConsCell{std::move(head), tail.as_list()})});
}

inline Value Value::pair(Value first, Value second) {
  return Value(Rep{std::make_shared<const PairCell>(PairCell{std::move(first), std::move(second)})});
}

inline bool operator==(const Value& a, const Value& b) {
  if (a.rep_.index() != b.rep_.index()) return false;
  switch (a.rep_.index()) {
    case 0:
    case 1:
      return true;  // unit == unit, hole == hole
    case 2:
      return a.as_int() == b.as_int();
    case 3:
      return a.as_bool() == b.as_bool();
    case 4:
      return a.as_label() == b.as_label();
    case 5: {
      const auto& x = a.as_labeled();
      const auto& y = b.as_labeled();
      if (x == y) return true;
      if (!x || !y) return false;
      return *x == *y;
    }
    case 6: {
      const ConsCell* x = a.as_list().get();
      const ConsCell* y = b.as_list().get();
      while (x && y) {
        if (x == y) return true;
        if (!(x->head == y->head)) return false;
        x = x->tail.get();
        y = y->tail.get();
      }
      return !x && !y;
    }
    case 7: {
      const auto& x = a.as_pair();
      const auto& y = b.as_pair();
      if (x == y) return true;
      if (!x || !y) return false;
      return x->first == y->first && x->second == y->second;
    }
  }
  return false;
}

/// Renders a value for diagnostics and reports.
inline std::string show(const Value& v) {
  if (v.is_unit()) return "unit";
  if (v.is_hole()) return "\xE2\x80\xA2";  // bullet
  if (v.is_int()) return std::to_string(v.as_int());
  if (v.is_bool()) return v.as_bool() ? "true" : "false";
  if (v.is_label()) return v.as_label().str();
  if (v.is_labeled()) {
    const auto& lv = v.as_labeled();
    return "{" + show(lv->data_tcb()) + " @" + lv->tag().str() + "}";
  }
  if (v.is_list()) {
    std::string out = "[";
    bool first = true;
    for (const ConsCell* c = v.as_list().get(); c; c = c->tail.get()) {
      if (!first) out += ", ";
      out += show(c->head);
      first = false;
    }
    return out + "]";
  }
  const auto& p = v.as_pair();
  return "(" + show(p->first) + ", " + show(p->second) + ")";
}

/// Drops every tag, replacing labeled values by their payloads. This is the
/// shape ghost-mode results take, so it is what ghost comparisons use.
inline Value strip_labels(const Value& v) {
  if (v.is_labeled()) return strip_labels(v.as_labeled()->data_tcb());
  if (v.is_list()) {
    std::vector<Value> heads;
    for (const ConsCell* c = v.as_list().get(); c; c = c->tail.get())
      heads.push_back(strip_labels(c->head));
    Value out = Value::nil();
    for (auto it = heads.rbegin(); it != heads.rend(); ++it) out = Value::cons(*it, out);
    return out;
  }
  if (v.is_pair()) {
    const auto& p = v.as_pair();
    return Value::pair(strip_labels(p->first), strip_labels(p->second));
  }
  return v;
}

}  // namespace ifc
