#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>
#include <sys/utsname.h>

#include "ifc/workbench.hpp"

namespace ifc::wb {

struct BenchRequest {
  std::string case_name;
  std::vector<ModeKind> modes{ModeKind::Dynamic, ModeKind::StaticResidual, ModeKind::Ghost};
  std::uint64_t iterations = 1'000'000;
  std::uint64_t seed = 7;
  std::string corpus_dir;
};

struct BenchRow {
  std::string mode;
  std::uint64_t iters = 0;
  std::uint64_t total_ns = 0;
  double ns_per_op = 0;
  double speedup_vs_dynamic = 0;  // 1 - time(mode)/time(dynamic)
};

struct BenchReport {
  std::string case_name;
  std::uint64_t seed = 0;
  std::string host;
  std::string build;
  std::vector<BenchRow> rows;

  const BenchRow* row(std::string_view mode) const {
    for (const auto& r : rows)
      if (r.mode == mode) return &r;
    return nullptr;
  }
};

namespace detail {

inline std::string host_stamp() {
  utsname u{};
  if (uname(&u) == 0) return std::string(u.nodename) + " " + u.sysname + " " + u.machine;
  return "unknown";
}

inline std::string build_stamp() {
  std::string out = "cxx " __VERSION__;
#ifdef __OPTIMIZE__
  out += " -O";
#else
  out += " -O0";
#endif
  return out;
}

}  // namespace detail

/// Times each requested mode over identical seeded workloads. Runs are cut
/// into chunks with the modes rotated inside every chunk, so clock drift
/// lands on all of them equally; workload generation happens outside the
/// timed sections. Modes execute strictly sequentially on one thread.
inline BenchReport run_bench(const BenchRequest& req) {
  if (req.iterations < 1) throw UsageError("bench needs at least one iteration");
  CaseStudy cs = load_case(req.case_name, req.corpus_dir);

  struct ModeRun {
    ModeKind kind;
    interp::PreparedEval prepared;
    std::uint64_t ns = 0;
    std::uint64_t iters = 0;
  };
  std::vector<ModeRun> runs;
  for (ModeKind m : req.modes) {
    EnforcementMode mode;
    switch (m) {
      case ModeKind::Dynamic:
        mode = EnforcementMode::dynamic();
        break;
      case ModeKind::StaticResidual:
        mode = an::static_residual_mode(cs.certificate);
        break;
      case ModeKind::Ghost:
        mode = an::ghost_mode(cs.certificate);  // refuses unproved programs
        break;
    }
    runs.push_back({m, interp::PreparedEval(cs.program, cs.bench_entry, mode), 0, 0});
  }

  constexpr std::uint64_t kChunk = 400;
  std::mt19937_64 rng(req.seed);
  std::vector<std::vector<Value>> chunk_args(kChunk);

  // warmup: a few chunks through every mode, results sanity-checked
  for (std::uint64_t i = 0; i < kChunk; ++i) chunk_args[i] = cs.gen_bench_args(rng);
  for (int w = 0; w < 5; ++w)
    for (auto& run : runs)
      for (std::uint64_t i = 0; i < kChunk; ++i) {
        auto out = run.prepared.run(chunk_args[i], cs.context);
        if (!out.ok())
          throw UsageError("benchmark workload failed under " +
                           std::string(to_string(run.kind)) + ": " + show(out));
      }

  std::mt19937_64 body_rng(req.seed + 1);
  std::uint64_t remaining = req.iterations;
  std::size_t rotation = 0;
  while (remaining > 0) {
    std::uint64_t n = std::min(remaining, kChunk);
    for (std::uint64_t i = 0; i < n; ++i) chunk_args[i] = cs.gen_bench_args(body_rng);
    // rotate which mode leads the chunk, so slow clock drift cancels out
    for (std::size_t k = 0; k < runs.size(); ++k) {
      auto& run = runs[(k + rotation) % runs.size()];
      auto t0 = std::chrono::steady_clock::now();
      for (std::uint64_t i = 0; i < n; ++i) {
        auto out = run.prepared.run(chunk_args[i], cs.context);
        if (!out.ok()) throw UsageError("benchmark iteration failed");
      }
      auto t1 = std::chrono::steady_clock::now();
      run.ns += std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
      run.iters += n;
    }
    ++rotation;
    remaining -= n;
  }

  BenchReport report;
  report.case_name = cs.name;
  report.seed = req.seed;
  report.host = detail::host_stamp();
  report.build = detail::build_stamp();
  double dynamic_ns = 0;
  for (const auto& run : runs)
    if (run.kind == ModeKind::Dynamic) dynamic_ns = static_cast<double>(run.ns);
  for (const auto& run : runs) {
    BenchRow row;
    row.mode = to_string(run.kind);
    row.iters = run.iters;
    row.total_ns = run.ns;
    row.ns_per_op = static_cast<double>(run.ns) / static_cast<double>(run.iters);
    row.speedup_vs_dynamic =
        dynamic_ns > 0 ? 1.0 - static_cast<double>(run.ns) / dynamic_ns : 0.0;
    report.rows.push_back(row);
  }
  return report;
}

inline std::string bench_csv(const BenchReport& r) {
  std::string out = "case,mode,iters,total_ns,ns_per_op,speedup_vs_dynamic\n";
  char line[256];
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%s,%s,%llu,%llu,%.1f,%.4f\n", r.case_name.c_str(),
                  row.mode.c_str(), static_cast<unsigned long long>(row.iters),
                  static_cast<unsigned long long>(row.total_ns), row.ns_per_op,
                  row.speedup_vs_dynamic);
    out += line;
  }
  return out;
}

inline nlohmann::json bench_json(const BenchReport& r) {
  nlohmann::json j;
  j["case"] = r.case_name;
  j["seed"] = r.seed;
  j["host"] = r.host;
  j["build"] = r.build;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"case", r.case_name},
                         {"mode", row.mode},
                         {"iters", row.iters},
                         {"total_ns", row.total_ns},
                         {"ns_per_op", row.ns_per_op},
                         {"speedup_vs_dynamic", row.speedup_vs_dynamic}});
  return j;
}

}  // namespace ifc::wb
