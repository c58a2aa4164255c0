#pragma once

#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ifc/analyzer.hpp"
#include "ifc/interp.hpp"
#include "ifc/ni.hpp"
#include "ifc/parse.hpp"

namespace ifc::wb {

// ---------------------------------------------------------------------------
// Boxed labeled values

/// A labeled value paired with a runtime tag that soundly over-approximates
/// the protection tag. Ghost-style clients store boxes so a usable label
/// exists at runtime even when value tags do not.
class Box {
 public:
  Box(LabeledValue inner, Label runtime_tag)
      : inner_(std::move(inner)), runtime_tag_(runtime_tag) {
    if (!runtime_tag.owner->can_flow(inner_.tag(), runtime_tag))
      throw UsageError("box runtime tag must bound the inner tag");
  }

  const LabeledValue& inner() const { return inner_; }
  Label runtime_tag() const { return runtime_tag_; }

 private:
  LabeledValue inner_;
  Label runtime_tag_;
};

/// Opens a box: raises the current label by the runtime tag (an upper bound
/// of the inner tag, which is what makes reading the payload sound) and
/// returns the payload.
inline rt::Res<rt::UnlabelResult> unbox(IfcContext ctx, const Box& b) {
  auto raised = rt::raise(ctx, b.runtime_tag());
  if (auto* err = std::get_if<IfcError>(&raised)) return *err;
  return rt::UnlabelResult{b.inner().data_tcb(), std::get<IfcContext>(raised)};
}

// ---------------------------------------------------------------------------
// Case studies

inline std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline dsl::TypedProgram load_program(const std::string& path, LatticePtr lattice) {
  return dsl::typecheck(dsl::parse(read_file(path), std::move(lattice)));
}

/// One benchmarkable client: its program, certificate, bench entry point
/// and a seeded per-iteration argument generator.
struct CaseStudy {
  std::string name;
  LatticePtr lattice;
  dsl::TypedProgram program;
  std::shared_ptr<const an::Certificate> certificate;
  std::string bench_entry;
  std::string scenario_entry;
  IfcContext context;
  std::function<std::vector<Value>(std::mt19937_64&)> gen_bench_args;
  std::function<std::vector<Value>(std::mt19937_64&)> gen_scenario_args;
};

inline CaseStudy load_bus(const std::string& corpus_dir) {
  CaseStudy cs;
  cs.name = "bus";
  auto lat = std::make_shared<PowerSetLattice>(std::vector<std::string>{"computer", "engine"});
  cs.lattice = lat;
  cs.program = load_program(corpus_dir + "/bus.ifc", lat);
  cs.certificate = std::make_shared<an::Certificate>(an::analyze(cs.program));
  cs.bench_entry = "bus_frame";
  cs.scenario_entry = "edr_log";
  cs.context = {lat->bottom(), {}};
  Label computer = lat->singleton("computer"), engine = lat->singleton("engine");
  Label edr = lat->top();
  cs.gen_bench_args = [=](std::mt19937_64& rng) {
    return std::vector<Value>{Value::label(computer),
                              Value::label(engine),
                              Value::label(edr),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256))};
  };
  cs.gen_scenario_args = [=](std::mt19937_64& rng) {
    return std::vector<Value>{Value::label(computer), Value::label(engine), Value::label(edr),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256))};
  };
  return cs;
}

inline CaseStudy load_mmu(const std::string& corpus_dir) {
  CaseStudy cs;
  cs.name = "mmu";
  auto lat = std::make_shared<PowerSetLattice>(std::vector<std::string>{"task1", "task2"});
  cs.lattice = lat;
  cs.program = load_program(corpus_dir + "/mmu.ifc", lat);
  cs.certificate = std::make_shared<an::Certificate>(an::analyze(cs.program));
  cs.bench_entry = "mmu_frame";
  cs.scenario_entry = "mmu_scenario";
  cs.context = {lat->bottom(), {}};
  Label t1 = lat->singleton("task1"), t2 = lat->singleton("task2"), shared = lat->top();
  cs.gen_bench_args = [=](std::mt19937_64& rng) {
    return std::vector<Value>{Value::label(t1), Value::label(t2), Value::label(shared),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256))};
  };
  cs.gen_scenario_args = [=](std::mt19937_64& rng) {
    return std::vector<Value>{Value::label(t1), Value::label(t2),
                              Value::integer(static_cast<std::int64_t>(rng() % 256)),
                              Value::integer(static_cast<std::int64_t>(rng() % 256))};
  };
  return cs;
}

inline CaseStudy load_datastar(const std::string& corpus_dir) {
  CaseStudy cs;
  cs.name = "datastar";
  auto lat =
      std::make_shared<PowerSetLattice>(std::vector<std::string>{"mary", "charles", "dave"});
  cs.lattice = lat;
  cs.program = load_program(corpus_dir + "/datastar.ifc", lat);
  cs.certificate = std::make_shared<an::Certificate>(an::analyze(cs.program));
  cs.bench_entry = "process_paper";
  cs.scenario_entry = "review_all";
  cs.context = {lat->bottom(), {}};
  Label mary = lat->singleton("mary");
  Label bottom = lat->bottom();
  std::size_t count = *lat->element_count();
  // the dynamic label stands in for one fetched at runtime; the workload
  // draws it above the paper's tag so the retained check passes
  cs.gen_bench_args = [=](std::mt19937_64& rng) {
    Label dyn = lat->join(mary, lat->element(rng() % count));
    return std::vector<Value>{
        Value::labeled(Value::integer(static_cast<std::int64_t>(rng() % 100)), mary),
        Value::label(dyn), Value::label(bottom),
        Value::integer(static_cast<std::int64_t>(rng() % 5))};
  };
  cs.gen_scenario_args = [=](std::mt19937_64& rng) {
    Value papers = Value::nil();
    for (int i = 0; i < 4; ++i)
      papers = Value::cons(
          Value::labeled(Value::integer(static_cast<std::int64_t>(rng() % 100)), mary), papers);
    return std::vector<Value>{papers, Value::integer(static_cast<std::int64_t>(rng() % 5))};
  };
  return cs;
}

inline CaseStudy load_case(const std::string& name, const std::string& corpus_dir) {
  if (name == "bus") return load_bus(corpus_dir);
  if (name == "mmu") return load_mmu(corpus_dir);
  if (name == "datastar") return load_datastar(corpus_dir);
  throw UsageError("unknown case '" + name + "' (expected bus, mmu or datastar)");
}

// ---------------------------------------------------------------------------
// The conference-database host driver

/// Builds a seeded database of boxed papers. Every paper is protected at
/// its author's label; the box carries a runtime bound above it.
inline std::vector<Box> make_paper_db(const PowerSetLattice& lat, std::uint64_t seed,
                                      std::size_t papers, Label author) {
  std::mt19937_64 rng(seed);
  std::vector<Box> db;
  std::size_t count = *lat.element_count();
  for (std::size_t i = 0; i < papers; ++i) {
    Label bound = lat.join(author, lat.element(rng() % count));
    db.emplace_back(LabeledValue(Value::integer(static_cast<std::int64_t>(rng() % 100)), author),
                    bound);
  }
  return db;
}

/// Fetching never opens a paper, so the caller's label is untouched: the
/// host just filters by the public tag.
inline std::vector<const Box*> fetch_papers_for(const std::vector<Box>& db, Label author) {
  std::vector<const Box*> out;
  for (const auto& b : db)
    if (b.inner().tag() == author) out.push_back(&b);
  return out;
}

struct ReviewRunReport {
  std::size_t reviewed = 0;
  IfcContext final_context;
};

/// Reviews every fetched paper through the tolabeled client, confirming the
/// driver's label is preserved across the whole pass.
inline ReviewRunReport review_papers(const CaseStudy& datastar, const std::vector<const Box*>& papers,
                                     std::int64_t bias, IfcContext ctx) {
  interp::PreparedEval run(datastar.program, "add_score", EnforcementMode::dynamic());
  ReviewRunReport report;
  for (const Box* b : papers) {
    // each review runs bracketed: the raised label never leaks out
    auto braket = rt::to_labeled(ctx, [&](IfcContext inner) -> rt::Res<std::pair<Value, IfcContext>> {
      auto opened = unbox(inner, *b);
      if (auto* err = std::get_if<IfcError>(&opened)) return *err;
      auto& ur = std::get<rt::UnlabelResult>(opened);
      auto out = run.run({Value::labeled(ur.value, b->inner().tag()), Value::integer(bias)},
                         ur.context);
      if (!out.ok()) return out.error();
      return std::pair{out.success().value, out.success().context};
    });
    if (std::get_if<IfcError>(&braket)) throw UsageError("review run failed unexpectedly");
    ctx = std::get<rt::LabelResult>(braket).context;
    report.reviewed++;
  }
  report.final_context = ctx;
  return report;
}

// ---------------------------------------------------------------------------
// EDR separation

struct SeparationCase {
  Label src, dst;
  bool forbidden;  // policy: src may not flow to dst
  bool errored;    // the dynamic run raised InvalidLabel
};

struct SeparationReport {
  LatticePtr lattice;  // keeps the labels in `cases` alive
  std::vector<SeparationCase> cases;
  bool exact() const {
    for (const auto& c : cases)
      if (c.forbidden != c.errored) return false;
    return true;
  }
};

/// Relays a packet between every pair of bus labels under dynamic checks:
/// InvalidLabel must fire exactly on the pairs the lattice forbids.
inline SeparationReport run_separation(const std::string& corpus_dir) {
  auto lat = std::make_shared<PowerSetLattice>(std::vector<std::string>{"computer", "engine"});
  auto tp = load_program(corpus_dir + "/bus_probe.ifc", lat);
  SeparationReport report;
  report.lattice = lat;
  for (Label src : lat->elements())
    for (Label dst : lat->elements()) {
      auto out = interp::eval(tp, "relay",
                              {Value::label(src), Value::label(dst), Value::integer(1)},
                              {lat->bottom(), {}}, EnforcementMode::dynamic());
      bool errored = !out.ok() && out.error().kind == IfcErrorKind::InvalidLabel;
      if (!out.ok() && out.error().kind != IfcErrorKind::InvalidLabel)
        throw UsageError("separation probe failed with an unexpected error");
      report.cases.push_back({src, dst, !lat->can_flow(src, dst), errored});
    }
  return report;
}

// ---------------------------------------------------------------------------
// Mode coherence

struct CoherenceReport {
  std::uint64_t runs = 0;
  std::uint64_t mismatches = 0;
  std::uint64_t errors = 0;  // runs that ended in an IfcError under any mode
  bool ok() const { return mismatches == 0; }
};

/// Replays seeded workloads through every runnable mode: dynamic and
/// static-residual outcomes must be identical, ghost payloads must match.
inline CoherenceReport check_mode_coherence(const CaseStudy& cs, std::string_view entry,
                                            std::function<std::vector<Value>(std::mt19937_64&)> gen,
                                            std::uint64_t seed, std::uint64_t runs) {
  interp::PreparedEval dynamic(cs.program, entry, EnforcementMode::dynamic());
  interp::PreparedEval static_run(cs.program, entry, an::static_residual_mode(cs.certificate));
  std::optional<interp::PreparedEval> ghost;
  if (cs.certificate->fully_proved())
    ghost.emplace(cs.program, entry, an::ghost_mode(cs.certificate));

  CoherenceReport report;
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = 0; i < runs; ++i) {
    std::vector<Value> args = gen(rng);
    auto d = dynamic.run(args, cs.context);
    auto s = static_run.run(args, cs.context);
    bool ok = interp::outcome_equal(d, s);
    bool errored = !d.ok();
    if (ghost) {
      auto g = ghost->run(args, cs.context);
      ok = ok && d.ok() == g.ok() &&
           (!d.ok() || strip_labels(d.success().value) == g.success().value);
      errored = errored || !g.ok();
    }
    report.runs++;
    if (!ok) report.mismatches++;
    if (errored) report.errors++;
  }
  return report;
}

}  // namespace ifc::wb
