#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ifc {

/// Thrown on misuse of the library API (wrong lattice instance, unknown
/// names, malformed requests). Distinct from IfcError, which is a value.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Lattice;

/// One element of a security lattice. A label belongs to exactly one
/// Lattice instance; equality is structural (same instance, same element).
struct Label {
  const Lattice* owner = nullptr;
  std::uint32_t bits = 0;

  friend bool operator==(const Label&, const Label&) = default;
  std::string str() const;
};

/// A security lattice: bottom, partial order, join and meet, plus an
/// optional finite enumeration of its elements. Instances are immutable
/// after construction and safe to share across threads.
class Lattice {
 public:
  virtual ~Lattice() = default;

  virtual std::string name() const = 0;

  Label bottom() const { return mk(bottom_bits()); }

  bool can_flow(Label a, Label b) const {
    validate(a);
    validate(b);
    return flows(a.bits, b.bits);
  }

  Label join(Label a, Label b) const {
    validate(a);
    validate(b);
    return mk(join_bits(a.bits, b.bits));
  }

  Label meet(Label a, Label b) const {
    validate(a);
    validate(b);
    return mk(meet_bits(a.bits, b.bits));
  }

  /// Number of elements when the lattice is finitely enumerable.
  virtual std::optional<std::size_t> element_count() const { return std::nullopt; }

  virtual Label element(std::size_t) const {
    throw UsageError("lattice '" + name() + "' is not enumerable");
  }

  std::vector<Label> elements() const {
    auto n = element_count();
    if (!n) throw UsageError("lattice '" + name() + "' is not enumerable");
    std::vector<Label> out;
    out.reserve(*n);
    for (std::size_t i = 0; i < *n; ++i) out.push_back(element(i));
    return out;
  }

  virtual Label sample(std::mt19937_64& rng) const {
    auto n = element_count();
    if (!n) throw UsageError("lattice '" + name() + "' has no sampler and no enumeration");
    return element(std::uniform_int_distribution<std::size_t>(0, *n - 1)(rng));
  }

  virtual std::string show(Label l) const = 0;

  /// Parses an element name; nullopt when the text names no element.
  virtual std::optional<Label> parse(std::string_view text) const = 0;

  void check_member(Label l) const { validate(l); }

 protected:
  Label mk(std::uint32_t bits) const { return Label{this, bits}; }

  void validate(Label l) const {
    if (l.owner != this)
      throw UsageError("label does not belong to lattice '" + name() + "'");
  }

  virtual std::uint32_t bottom_bits() const = 0;
  virtual bool flows(std::uint32_t a, std::uint32_t b) const = 0;
  virtual std::uint32_t join_bits(std::uint32_t a, std::uint32_t b) const = 0;
  virtual std::uint32_t meet_bits(std::uint32_t a, std::uint32_t b) const = 0;
};

inline std::string Label::str() const {
  return owner ? owner->show(*this) : std::string("<detached>");
}

using LatticePtr = std::shared_ptr<const Lattice>;

// ---------------------------------------------------------------------------
// Built-in instances

/// Total order Low < Medium < High.
class TriLevelLattice final : public Lattice {
 public:
  std::string name() const override { return "trilevel"; }
  std::optional<std::size_t> element_count() const override { return 3; }
  Label element(std::size_t i) const override {
    if (i >= 3) throw UsageError("trilevel element index out of range");
    return mk(static_cast<std::uint32_t>(i));
  }
  std::string show(Label l) const override {
    validate(l);
    static const char* names[] = {"Low", "Medium", "High"};
    return names[l.bits];
  }
  std::optional<Label> parse(std::string_view text) const override {
    if (text == "Low") return mk(0);
    if (text == "Medium") return mk(1);
    if (text == "High") return mk(2);
    return std::nullopt;
  }

 protected:
  std::uint32_t bottom_bits() const override { return 0; }
  bool flows(std::uint32_t a, std::uint32_t b) const override { return a <= b; }
  std::uint32_t join_bits(std::uint32_t a, std::uint32_t b) const override { return a > b ? a : b; }
  std::uint32_t meet_bits(std::uint32_t a, std::uint32_t b) const override { return a < b ? a : b; }
};

/// Public < Secret.
class TwoPointLattice final : public Lattice {
 public:
  std::string name() const override { return "twopoint"; }
  std::optional<std::size_t> element_count() const override { return 2; }
  Label element(std::size_t i) const override {
    if (i >= 2) throw UsageError("twopoint element index out of range");
    return mk(static_cast<std::uint32_t>(i));
  }
  std::string show(Label l) const override {
    validate(l);
    return l.bits ? "Secret" : "Public";
  }
  std::optional<Label> parse(std::string_view text) const override {
    if (text == "Public") return mk(0);
    if (text == "Secret") return mk(1);
    return std::nullopt;
  }

 protected:
  std::uint32_t bottom_bits() const override { return 0; }
  bool flows(std::uint32_t a, std::uint32_t b) const override { return a <= b; }
  std::uint32_t join_bits(std::uint32_t a, std::uint32_t b) const override { return a | b; }
  std::uint32_t meet_bits(std::uint32_t a, std::uint32_t b) const override { return a & b; }
};

/// Subset lattice over a finite principal set: canFlow is inclusion,
/// join is union, meet is intersection, bottom is the empty set.
class PowerSetLattice final : public Lattice {
 public:
  explicit PowerSetLattice(std::vector<std::string> principals)
      : principals_(std::move(principals)) {
    if (principals_.empty()) throw UsageError("powerset lattice needs at least one principal");
    if (principals_.size() > 16) throw UsageError("powerset lattice supports at most 16 principals");
    for (std::size_t i = 0; i < principals_.size(); ++i)
      for (std::size_t j = i + 1; j < principals_.size(); ++j)
        if (principals_[i] == principals_[j])
          throw UsageError("duplicate principal '" + principals_[i] + "'");
  }

  std::string name() const override {
    std::string n = "powerset:";
    for (std::size_t i = 0; i < principals_.size(); ++i) {
      if (i) n += ',';
      n += principals_[i];
    }
    return n;
  }

  std::optional<std::size_t> element_count() const override {
    return std::size_t{1} << principals_.size();
  }

  Label element(std::size_t i) const override {
    if (i >= *element_count()) throw UsageError("powerset element index out of range");
    return mk(static_cast<std::uint32_t>(i));
  }

  std::string show(Label l) const override {
    validate(l);
    std::string out = "{";
    bool first = true;
    for (std::size_t i = 0; i < principals_.size(); ++i) {
      if (l.bits & (1u << i)) {
        if (!first) out += ',';
        out += principals_[i];
        first = false;
      }
    }
    out += '}';
    return out;
  }

  std::optional<Label> parse(std::string_view text) const override {
    if (text.empty()) return std::nullopt;
    if (text.front() != '{') {
      // a bare principal name denotes its singleton
      for (std::size_t i = 0; i < principals_.size(); ++i)
        if (text == principals_[i]) return mk(1u << i);
      return std::nullopt;
    }
    if (text.back() != '}') return std::nullopt;
    std::uint32_t bits = 0;
    std::string_view body = text.substr(1, text.size() - 2);
    while (!body.empty()) {
      auto comma = body.find(',');
      std::string_view item = body.substr(0, comma);
      bool found = false;
      for (std::size_t i = 0; i < principals_.size(); ++i) {
        if (item == principals_[i]) {
          bits |= 1u << i;
          found = true;
          break;
        }
      }
      if (!found) return std::nullopt;
      if (comma == std::string_view::npos) break;
      body.remove_prefix(comma + 1);
    }
    return mk(bits);
  }

  Label singleton(std::string_view principal) const {
    auto l = parse(principal);
    if (!l) throw UsageError("unknown principal '" + std::string(principal) + "'");
    return *l;
  }

  Label top() const { return mk((1u << principals_.size()) - 1); }

 protected:
  std::uint32_t bottom_bits() const override { return 0; }
  bool flows(std::uint32_t a, std::uint32_t b) const override { return (a & ~b) == 0; }
  std::uint32_t join_bits(std::uint32_t a, std::uint32_t b) const override { return a | b; }
  std::uint32_t meet_bits(std::uint32_t a, std::uint32_t b) const override { return a & b; }

 private:
  std::vector<std::string> principals_;
};

/// Builds a built-in lattice from its CLI/DSL name:
/// "trilevel", "twopoint", or "powerset:<P1,P2,...>".
inline LatticePtr make_lattice(std::string_view spec) {
  if (spec == "trilevel") return std::make_shared<TriLevelLattice>();
  if (spec == "twopoint") return std::make_shared<TwoPointLattice>();
  constexpr std::string_view kPowerset = "powerset:";
  if (spec.substr(0, kPowerset.size()) == kPowerset) {
    std::vector<std::string> principals;
    std::string_view body = spec.substr(kPowerset.size());
    while (!body.empty()) {
      auto comma = body.find(',');
      principals.emplace_back(body.substr(0, comma));
      if (comma == std::string_view::npos) break;
      body.remove_prefix(comma + 1);
    }
    return std::make_shared<PowerSetLattice>(std::move(principals));
  }
  throw UsageError("unknown lattice '" + std::string(spec) + "'");
}

// ---------------------------------------------------------------------------
// Law checking

/// How to drive check_laws: every triple of an enumerable lattice, or a
/// seeded sample of triples.
struct LawBudget {
  bool exhaustive = false;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;

  static LawBudget all() { return {true, 0, 0}; }
  static LawBudget sampled(std::size_t n, std::uint64_t seed = 0) { return {false, n, seed}; }
};

struct LawResult {
  std::string law;
  bool passed = true;
  std::uint64_t cases = 0;
  std::vector<Label> witness;  // the (x, y, z) triple that broke the law
};

struct LawReport {
  std::string lattice;
  std::uint64_t triples = 0;
  std::vector<LawResult> laws;

  bool all_passed() const {
    for (const auto& l : laws)
      if (!l.passed) return false;
    return true;
  }

  const LawResult* find(std::string_view law) const {
    for (const auto& l : laws)
      if (l.law == law) return &l;
    return nullptr;
  }
};

namespace detail {

inline void check_triple(const Lattice& lat, Label x, Label y, Label z, LawReport& report) {
  auto fail = [&](std::size_t idx) {
    auto& law = report.laws[idx];
    if (law.passed) {
      law.passed = false;
      law.witness = {x, y, z};
    }
  };
  auto count = [&](std::size_t idx) { report.laws[idx].cases++; };

  count(0);
  if (!lat.can_flow(lat.bottom(), x)) fail(0);
  count(1);
  if (!lat.can_flow(x, x)) fail(1);
  count(2);
  if (lat.can_flow(x, y) && lat.can_flow(y, x) && !(x == y)) fail(2);
  count(3);
  if (lat.can_flow(x, y) && lat.can_flow(y, z) && !lat.can_flow(x, z)) fail(3);

  count(4);
  Label m = lat.meet(x, y);
  bool meet_ok = lat.can_flow(m, x) && lat.can_flow(m, y) &&
                 (!(lat.can_flow(z, x) && lat.can_flow(z, y)) || lat.can_flow(z, m));
  if (!meet_ok) fail(4);

  count(5);
  Label j = lat.join(x, y);
  bool join_ok = lat.can_flow(x, j) && lat.can_flow(y, j) &&
                 (!(lat.can_flow(x, z) && lat.can_flow(y, z)) || lat.can_flow(j, z));
  if (!join_ok) fail(5);
}

}  // namespace detail

/// Checks the six lattice laws over triples (x, y, z). Exhaustive budgets
/// require a finite enumeration; otherwise triples are sampled. Failures
/// are report entries with a witness triple, never errors.
inline LawReport check_laws(const Lattice& lat, LawBudget budget = LawBudget::all()) {
  LawReport report;
  report.lattice = lat.name();
  for (const char* name : {"lawBot", "lawReflexivity", "lawAntisymmetry", "lawTransitivity",
                           "lawMeet", "lawJoin"})
    report.laws.push_back(LawResult{name});

  if (budget.exhaustive) {
    auto elems = lat.elements();
    for (Label x : elems)
      for (Label y : elems)
        for (Label z : elems) {
          detail::check_triple(lat, x, y, z, report);
          report.triples++;
        }
  } else {
    if (budget.samples < 1) throw UsageError("law check budget must be at least 1");
    std::mt19937_64 rng(budget.seed);
    for (std::size_t i = 0; i < budget.samples; ++i) {
      Label x = lat.sample(rng), y = lat.sample(rng), z = lat.sample(rng);
      detail::check_triple(lat, x, y, z, report);
      report.triples++;
    }
  }
  return report;
}

}  // namespace ifc
