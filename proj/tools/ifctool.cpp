// Command-line front end: lattice law checking, client parsing and
// analysis, residualization, function erasure, noninterference checking,
// single runs and the mode benchmark.
//
// Exit status: 0 success, 1 failed check (laws, NI, runtime IFC error),
// 2 usage error (bad invocation, unparsable input, mismatched certificate).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ifc/bench.hpp"
#include "ifc/ni.hpp"
#include "ifc/workbench.hpp"

using namespace ifc;

namespace {

#ifndef IFC_CORPUS_DIR
#define IFC_CORPUS_DIR "corpus"
#endif

struct CheckFailed {};  // carried to main for exit status 1

dsl::TypedProgram load(const std::string& file, const std::string& lattice_name) {
  return wb::load_program(file, make_lattice(lattice_name));
}

Label parse_label_arg(const Lattice& lat, const std::string& text) {
  auto l = lat.parse(text);
  if (!l) throw UsageError("'" + text + "' is not a label of " + lat.name());
  return *l;
}

Value parse_value_arg(const Lattice& lat, const std::string& text) {
  if (text == "true") return Value::boolean(true);
  if (text == "false") return Value::boolean(false);
  if (text == "unit") return Value::unit();
  if (text == "nil") return Value::nil();
  if (auto at = text.find('@'); at != std::string::npos) {
    Value payload = parse_value_arg(lat, text.substr(0, at));
    return Value::labeled(payload, parse_label_arg(lat, text.substr(at + 1)));
  }
  if (!text.empty() && (std::isdigit(static_cast<unsigned char>(text[0])) ||
                        (text[0] == '-' && text.size() > 1)))
    return Value::integer(std::stoll(text));
  return Value::label(parse_label_arg(lat, text));
}

int cmd_laws(const std::string& lattice_name, bool exhaustive, std::size_t samples,
             std::uint64_t seed) {
  auto lat = make_lattice(lattice_name);
  LawBudget budget = exhaustive ? LawBudget::all() : LawBudget::sampled(samples, seed);
  LawReport report = check_laws(*lat, budget);
  std::printf("lattice: %s  (%llu triples)\n", report.lattice.c_str(),
              static_cast<unsigned long long>(report.triples));
  std::printf("%-18s %-6s %-10s %s\n", "law", "result", "cases", "witness");
  for (const auto& law : report.laws) {
    std::string witness;
    if (!law.passed)
      for (const auto& w : law.witness) witness += w.str() + " ";
    std::printf("%-18s %-6s %-10llu %s\n", law.law.c_str(), law.passed ? "pass" : "FAIL",
                static_cast<unsigned long long>(law.cases), witness.c_str());
  }
  if (!report.all_passed()) throw CheckFailed{};
  return 0;
}

int cmd_ni(const std::string& file, const std::string& lattice_name, const std::string& entry,
           bool random, std::size_t samples, std::uint64_t seed, std::uint64_t fuel,
           const std::string& int_grid, int max_list) {
  auto tp = load(file, lattice_name);
  ni::Domains domains;
  domains.max_list_len = max_list;
  if (!int_grid.empty()) {
    domains.int_grid.clear();
    std::stringstream ss(int_grid);
    for (std::string part; std::getline(ss, part, ',');)
      domains.int_grid.push_back(std::stoll(part));
  }
  ni::NITheorem theorem = ni::gen_ni_theorem(tp, entry, domains);
  ni::Strategy strategy =
      random ? ni::Strategy::random(seed, samples) : ni::Strategy::exhaustive();
  ni::NIReport report = ni::check_ni(theorem, strategy, fuel);
  std::cout << ni::report_to_json(report, theorem, strategy).dump(2) << "\n";
  if (!report.passed) throw CheckFailed{};
  return 0;
}

int cmd_run(const std::string& file, const std::string& lattice_name, const std::string& entry,
            const std::string& mode_name, const std::string& cert_file, const std::string& cur,
            const std::string& clearance, const std::vector<std::string>& raw_args,
            std::uint64_t fuel) {
  auto tp = load(file, lattice_name);
  const Lattice& lat = *tp.program.lattice;

  EnforcementMode mode = EnforcementMode::dynamic();
  if (mode_name != "d") {
    std::shared_ptr<const an::Certificate> cert;
    if (cert_file.empty()) {
      cert = std::make_shared<an::Certificate>(an::analyze(tp));
    } else {
      std::ifstream in(cert_file);
      if (!in) throw UsageError("cannot open certificate '" + cert_file + "'");
      nlohmann::json j;
      in >> j;
      cert = std::make_shared<an::Certificate>(an::certificate_from_json(j));
    }
    mode = mode_name == "s" ? an::static_residual_mode(cert) : an::ghost_mode(cert);
  }

  IfcContext ctx{cur.empty() ? lat.bottom() : parse_label_arg(lat, cur), std::nullopt};
  if (!clearance.empty()) ctx.clearance = parse_label_arg(lat, clearance);

  std::vector<Value> args;
  for (const auto& raw : raw_args) args.push_back(parse_value_arg(lat, raw));

  IfcOutcome out = interp::eval(tp, entry, args, ctx, mode, fuel);
  nlohmann::json j;
  if (out.ok()) {
    j["value"] = show(out.success().value);
    if (mode.kind == ModeKind::Ghost) {
      // ghost runs track nothing; re-derive the final label dynamically
      auto mirror = interp::eval(tp, entry, args, ctx, EnforcementMode::dynamic(), fuel);
      if (mirror.ok()) j["cur"] = mirror.success().context.cur.str();
      j["cur_rederived"] = true;
    } else {
      j["cur"] = out.success().context.cur.str();
    }
  } else {
    j["error"] = to_string(out.error().kind);
    if (out.error().site >= 0) j["site"] = out.error().site;
    j["message"] = out.error().message;
  }
  std::cout << j.dump(2) << "\n";
  if (!out.ok()) throw CheckFailed{};
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floating-label information flow toolkit"};
  app.require_subcommand(1);

  std::string lattice_name = "trilevel";
  std::string file, entry, cert_file, out_file;

  auto* laws = app.add_subcommand("laws", "check the six lattice laws");
  std::string laws_lattice;
  bool exhaustive = false;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  laws->add_option("lattice", laws_lattice, "trilevel | twopoint | powerset:<P1,P2,...>")
      ->required();
  laws->add_flag("--exhaustive", exhaustive, "walk every triple (needs a finite lattice)");
  laws->add_option("--samples", samples, "triples to sample otherwise");
  laws->add_option("--seed", seed, "sampling seed");

  auto* parse_cmd = app.add_subcommand("parse", "parse and pretty-print a client program");
  parse_cmd->add_option("file", file)->required();
  parse_cmd->add_option("--lattice", lattice_name);

  auto* analyze_cmd = app.add_subcommand("analyze", "emit the label-flow certificate");
  analyze_cmd->add_option("file", file)->required();
  analyze_cmd->add_option("--lattice", lattice_name);
  analyze_cmd->add_option("-o,--out", out_file, "write the certificate here too");

  auto* resid = app.add_subcommand("residualize", "drop statically proved checks");
  resid->add_option("file", file)->required();
  resid->add_option("--lattice", lattice_name);
  resid->add_option("--cert", cert_file, "certificate json (default: analyze now)");

  auto* erase_cmd = app.add_subcommand("erase", "emit the erased program for an entry");
  erase_cmd->add_option("file", file)->required();
  erase_cmd->add_option("--entry", entry)->required();
  erase_cmd->add_option("--lattice", lattice_name);

  auto* ni_cmd = app.add_subcommand("ni", "check the per-client noninterference theorem");
  bool ni_random = false;
  std::size_t ni_samples = 10000;
  std::uint64_t ni_seed = 0, fuel = interp::kDefaultFuel;
  std::string int_grid;
  int max_list = 2;
  ni_cmd->add_option("file", file)->required();
  ni_cmd->add_option("--entry", entry)->required();
  ni_cmd->add_option("--lattice", lattice_name);
  ni_cmd->add_flag("--exhaustive", "full grid (the default)");
  ni_cmd->add_flag("--random", ni_random, "sample instead of walking the grid");
  ni_cmd->add_option("--samples", ni_samples);
  ni_cmd->add_option("--seed", ni_seed);
  ni_cmd->add_option("--fuel", fuel);
  ni_cmd->add_option("--int-grid", int_grid, "comma-separated int domain (default 0,1,2)");
  ni_cmd->add_option("--max-list", max_list, "list length bound (default 2)");

  auto* run_cmd = app.add_subcommand("run", "evaluate one entry point");
  std::string mode_name = "d", cur, clearance;
  std::vector<std::string> raw_args;
  run_cmd->add_option("file", file)->required();
  run_cmd->add_option("--entry", entry)->required();
  run_cmd->add_option("--lattice", lattice_name);
  run_cmd->add_option("--mode", mode_name, "d | s | g")->check(CLI::IsMember({"d", "s", "g"}));
  run_cmd->add_option("--cert", cert_file, "certificate json for s/g (default: analyze now)");
  run_cmd->add_option("--cur", cur, "entry current label (default: bottom)");
  run_cmd->add_option("--clearance", clearance);
  run_cmd->add_option("--arg", raw_args, "argument: int, true/false, unit, label, or v@Tag");
  run_cmd->add_option("--fuel", fuel);

  auto* bench_cmd = app.add_subcommand("bench", "time the enforcement modes");
  std::string case_name, modes_csv = "d,s,g", corpus_dir = IFC_CORPUS_DIR;
  std::uint64_t iters = 1000000, bench_seed = 7;
  bool as_json = false;
  bench_cmd->add_option("case", case_name, "bus | mmu | datastar")->required();
  bench_cmd->add_option("--modes", modes_csv, "subset of d,s,g");
  bench_cmd->add_option("--iters", iters);
  bench_cmd->add_option("--seed", bench_seed);
  bench_cmd->add_option("--corpus", corpus_dir, "directory holding the client programs");
  bench_cmd->add_flag("--json", as_json, "emit the structured document instead of CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (laws->parsed()) return cmd_laws(laws_lattice, exhaustive, samples, seed);

    if (parse_cmd->parsed()) {
      std::fputs(dsl::pretty_print(load(file, lattice_name).program).c_str(), stdout);
      return 0;
    }

    if (analyze_cmd->parsed()) {
      auto cert = an::analyze(load(file, lattice_name));
      std::string text = an::certificate_to_json(cert).dump(2) + "\n";
      std::fputs(text.c_str(), stdout);
      if (!out_file.empty()) std::ofstream(out_file) << text;
      return 0;
    }

    if (resid->parsed()) {
      auto tp = load(file, lattice_name);
      an::Certificate cert;
      if (cert_file.empty()) {
        cert = an::analyze(tp);
      } else {
        std::ifstream in(cert_file);
        if (!in) throw UsageError("cannot open certificate '" + cert_file + "'");
        nlohmann::json j;
        in >> j;
        cert = an::certificate_from_json(j);
      }
      dsl::Program residual = an::residualize(tp, cert);
      std::fprintf(stderr, "retained checks: %d\n", an::retained_checks(cert));
      std::fputs(dsl::pretty_print(residual).c_str(), stdout);
      return 0;
    }

    if (erase_cmd->parsed()) {
      auto tp = load(file, lattice_name);
      erasure::ErasedProgram erased = erasure::erase_function(tp, entry);
      std::fputs(dsl::pretty_print(erased.program).c_str(), stdout);
      return 0;
    }

    if (ni_cmd->parsed())
      return cmd_ni(file, lattice_name, entry, ni_random, ni_samples, ni_seed, fuel, int_grid,
                    max_list);

    if (run_cmd->parsed())
      return cmd_run(file, lattice_name, entry, mode_name, cert_file, cur, clearance, raw_args,
                     fuel);

    if (bench_cmd->parsed()) {
      wb::BenchRequest req;
      req.case_name = case_name;
      req.iterations = iters;
      req.seed = bench_seed;
      req.corpus_dir = corpus_dir;
      req.modes.clear();
      std::stringstream ss(modes_csv);
      for (std::string part; std::getline(ss, part, ',');) {
        if (part == "d") req.modes.push_back(ModeKind::Dynamic);
        else if (part == "s") req.modes.push_back(ModeKind::StaticResidual);
        else if (part == "g") req.modes.push_back(ModeKind::Ghost);
        else throw UsageError("unknown mode '" + part + "'");
      }
      wb::BenchReport report = wb::run_bench(req);
      if (as_json)
        std::cout << wb::bench_json(report).dump(2) << "\n";
      else
        std::fputs(wb::bench_csv(report).c_str(), stdout);
      std::fprintf(stderr, "host: %s | build: %s | seed: %llu\n", report.host.c_str(),
                   report.build.c_str(), static_cast<unsigned long long>(report.seed));
      return 0;
    }
  } catch (const CheckFailed&) {
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
