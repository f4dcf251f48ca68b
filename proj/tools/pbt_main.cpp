// Command line front end: experiment runner, oracle cross-checks, and model
// inspection for the factored belief tracking library.

#include <cstdint>
#include <iostream>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "pbt/beams.hpp"
#include "pbt/domains.hpp"
#include "pbt/errors.hpp"
#include "pbt/harness.hpp"
#include "pbt/model.hpp"

namespace {

struct DomainFlags {
  std::string domain = "minesweeper";
  int rows = 6;
  int cols = 6;
  int length = 8;
  int mines = 6;
  double density = -1.0;  // < 0: use the builder default (mines / cells)
};

void add_domain_flags(CLI::App* cmd, DomainFlags& f) {
  cmd->add_option("--domain", f.domain, "Domain family")
      ->check(CLI::IsMember({"minesweeper", "line-slam-direct", "line-slam-split", "line3-slam",
                             "minemapping"}))
      ->capture_default_str();
  cmd->add_option("--rows", f.rows, "Grid rows (minesweeper, minemapping)")
      ->capture_default_str();
  cmd->add_option("--cols", f.cols, "Grid columns (minesweeper, minemapping)")
      ->capture_default_str();
  cmd->add_option("--length", f.length, "Line length n (line domains)")->capture_default_str();
  cmd->add_option("--mines", f.mines, "Mine count (minesweeper, minemapping)")
      ->capture_default_str();
  cmd->add_option("--mine-density", f.density,
                  "Per-cell Bernoulli prior override (default: mines / cells)");
}

void fill_spec(const DomainFlags& f, pbt::ExperimentSpec& spec) {
  spec.kind = pbt::domain_kind_from_name(f.domain);
  spec.rows = f.rows;
  spec.cols = f.cols;
  spec.length = f.length;
  spec.mines = f.mines;
  if (f.density >= 0.0) spec.density = f.density;
}

pbt::DomainModel build_from_flags(const DomainFlags& f) {
  std::optional<double> density;
  if (f.density >= 0.0) density = f.density;
  switch (pbt::domain_kind_from_name(f.domain)) {
    case pbt::DomainKind::kMinesweeper:
      return pbt::build_minesweeper(f.rows, f.cols, f.mines, density);
    case pbt::DomainKind::kLineSlamDirect: return pbt::build_line_slam_direct(f.length);
    case pbt::DomainKind::kLineSlamSplit: return pbt::build_line_slam_split(f.length);
    case pbt::DomainKind::kLine3Slam: return pbt::build_line3_slam(f.length);
    case pbt::DomainKind::kMinemapping:
      return pbt::build_minemapping(f.rows, f.cols, f.mines, density);
  }
  pbt::fail(pbt::ErrorCode::BadArgument, "unknown domain");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factored belief tracking over two-slice dynamic Bayesian networks"};
  app.require_subcommand(1);

  // ---- run ----
  DomainFlags run_domain;
  pbt::ExperimentSpec spec;
  std::string engine_name = "jt";
  std::string proposal = "optimal";
  std::string resample = "ess:0.5";
  std::string out_path;
  std::string format = "csv";
  CLI::App* run = app.add_subcommand("run", "Run an experiment configuration");
  add_domain_flags(run, run_domain);
  run->add_option("--engine", engine_name, "Marginal engine")
      ->check(CLI::IsMember({"jt", "bp", "ac"}))
      ->capture_default_str();
  run->add_option("--ac-m", spec.engine.ac_m, "Iterated-AC refinement levels beyond the minimum")
      ->capture_default_str();
  run->add_option("--ac-epsilon", spec.engine.ac_epsilon, "Rank base for iterated AC")
      ->capture_default_str();
  run->add_option("--bp-iters", spec.engine.bp_max_iters, "Loopy BP iteration cap")
      ->capture_default_str();
  run->add_option("--bp-tol", spec.engine.bp_tol, "Loopy BP convergence tolerance")
      ->capture_default_str();
  run->add_option("--bp-damping", spec.engine.bp_damping, "Loopy BP damping in [0,1)")
      ->capture_default_str();
  run->add_option("--particles", spec.tracker.particles, "Particle count")
      ->capture_default_str();
  run->add_option("--proposal", proposal, "Sampling proposal")
      ->check(CLI::IsMember({"motion", "optimal"}))
      ->capture_default_str();
  run->add_option("--resample", resample, "Resampling policy: never or ess:<fraction>")
      ->capture_default_str();
  run->add_option("--runs", spec.runs, "Independent runs / executions")->capture_default_str();
  run->add_option("--seed", spec.seed, "Master seed")->capture_default_str();
  run->add_option("--jobs", spec.jobs, "Worker threads")->capture_default_str();
  run->add_option("--out", out_path, "Result file (stdout when omitted)");
  run->add_option("--format", format, "Result format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  // ---- check-oracle ----
  DomainFlags oracle_domain;
  int max_vars = 24;
  std::uint64_t oracle_seed = 7;
  CLI::App* oracle = app.add_subcommand(
      "check-oracle", "Cross-check the factored machinery against exhaustive references");
  oracle->add_option("--domain", oracle_domain.domain, "Domain family")
      ->check(CLI::IsMember({"minesweeper", "line-slam-direct", "line-slam-split", "line3-slam",
                             "minemapping"}))
      ->capture_default_str();
  oracle->add_option("--max-vars", max_vars, "Skip instances with more state variables")
      ->capture_default_str();
  oracle->add_option("--seed", oracle_seed, "Master seed")->capture_default_str();

  // ---- describe ----
  DomainFlags describe_domain;
  CLI::App* describe =
      app.add_subcommand("describe", "Print a domain model's block structure");
  add_domain_flags(describe, describe_domain);

  // ---- dump-model ----
  DomainFlags dump_domain;
  std::string dump_path;
  CLI::App* dump = app.add_subcommand("dump-model", "Write a domain model as JSON");
  add_domain_flags(dump, dump_domain);
  dump->add_option("--out", dump_path, "Output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      fill_spec(run_domain, spec);
      spec.engine.kind = pbt::engine_kind_from_name(engine_name);
      spec.tracker.proposal = pbt::proposal_from_name(proposal);
      spec.tracker.resample = pbt::ResamplePolicy::parse(resample);
      pbt::RunResult result = pbt::run_experiment(spec);
      std::vector<pbt::RunResult> results{result};
      if (out_path.empty()) {
        std::cout << (format == "json" ? pbt::results_to_json(results)
                                       : pbt::results_to_csv(results));
      } else {
        pbt::write_results(out_path, results, format);
        std::cout << result.domain << " " << result.config << " engine=" << result.engine
                  << " -> " << out_path << "\n";
      }
      return 0;
    }

    if (oracle->parsed()) {
      bool ok = pbt::run_oracle_checks(pbt::domain_kind_from_name(oracle_domain.domain), max_vars,
                                       oracle_seed, std::cout);
      return ok ? 0 : 1;
    }

    if (describe->parsed()) {
      pbt::DomainModel d = build_from_flags(describe_domain);
      pbt::BeamStructure s = pbt::analyze_model(d.model);
      std::cout << "domain: " << pbt::domain_kind_name(d.kind) << " (" << pbt::config_label(d)
                << ")\n"
                << "state variables: " << d.model.num_state_vars()
                << ", observation variables: " << d.model.num_obs_vars()
                << ", actions: " << d.model.num_actions() << "\n"
                << "blocks: " << s.beam_count() << ", causal width: " << s.causal_width << "\n";
      std::cout << "sampled:";
      if (s.sampled_union.empty()) std::cout << " (none)";
      for (pbt::VarId v : s.sampled_union) std::cout << ' ' << d.model.state_vars[v].name;
      std::cout << "\n";
      for (const pbt::Beam& b : s.beams) {
        std::cout << "  block " << b.index << " {";
        for (size_t k = 0; k < b.vars.size(); ++k)
          std::cout << (k ? "," : "") << d.model.state_vars[b.vars[k]].name;
        std::cout << "} internal=" << s.internal_vars[b.index].size()
                  << " external-deterministic=" << s.external_bd[b.index].size()
                  << " sampled=" << s.sampled_vars[b.index].size() << "\n";
      }
      return 0;
    }

    if (dump->parsed()) {
      pbt::DomainModel d = build_from_flags(dump_domain);
      std::string text = pbt::model_to_json(d.model);
      if (dump_path.empty()) {
        std::cout << text << "\n";
      } else {
        std::ofstream out(dump_path, std::ios::binary);
        if (!out) pbt::fail(pbt::ErrorCode::IoError, "cannot open " + dump_path);
        out << text << "\n";
      }
      return 0;
    }
  } catch (const pbt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
