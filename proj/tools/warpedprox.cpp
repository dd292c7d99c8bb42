// Batch front end: parse a problem file, run it, write the trace and summary.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "warpedprox/io/generate.hpp"
#include "warpedprox/io/run.hpp"

namespace io = warpedprox::io;
using io::ExitCode;

namespace {

int code(ExitCode c) { return static_cast<int>(c); }

struct Loaded {
  std::optional<io::ProblemFile> problem;
  ExitCode failure = ExitCode::converged;
};

// Parse and validate, reporting failures on stderr.
Loaded load(const std::string& path, const io::Overrides& overrides) {
  Loaded out;
  try {
    auto pf = io::read_problem_text(io::read_file(path), path);
    io::apply_overrides(pf, overrides);
    io::validate_problem(pf);
    out.problem = std::move(pf);
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    out.failure = ExitCode::io;
  } catch (const io::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    out.failure = ExitCode::parse;
  } catch (const io::ValidationError& e) {
    std::cerr << "invalid problem: " << e.what() << "\n";
    out.failure = ExitCode::invalid;
  }
  return out;
}

bool write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) return false;
  os << text;
  return static_cast<bool>(os);
}

int run(const std::string& problem, const io::Overrides& overrides, const std::string& trace_path,
        const std::string& summary_path) {
  auto loaded = load(problem, overrides);
  if (!loaded.problem) return code(loaded.failure);
  const auto& pf = *loaded.problem;

  io::RunOutcome outcome = io::run_problem(pf);

  if (!trace_path.empty()) {
    std::ostringstream csv;
    io::write_trace_csv(csv, outcome.result, pf.zeros.size());
    if (!write_text(trace_path, csv.str())) {
      std::cerr << "error: cannot write trace '" << trace_path << "'\n";
      return code(ExitCode::io);
    }
  }
  std::string summary = io::summary_json(pf, outcome).dump(2) + "\n";
  if (summary_path.empty()) {
    std::cout << summary;
  } else if (!write_text(summary_path, summary)) {
    std::cerr << "error: cannot write summary '" << summary_path << "'\n";
    return code(ExitCode::io);
  }

  std::cerr << io::to_string(outcome.code) << " after " << outcome.result.iterations << " iterations";
  if (!outcome.diagnostic.empty()) std::cerr << ": " << outcome.diagnostic;
  std::cerr << "\n";
  return code(outcome.code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warped resolvent solvers for monotone inclusions"};
  app.set_version_flag("--version", "warpedprox 0.1.0");

  std::string problem, trace_path, summary_path;
  io::Overrides overrides;
  std::string algo;
  std::size_t max_iter = 0;
  double tol_residual = 0.0, tol_step = 0.0, relax = 0.0;
  const std::vector<std::string> algos{"weak", "strong", "fbf", "tseng", "coupled"};

  app.add_option("--problem", problem, "Problem file (YAML)")->check(CLI::ExistingFile);
  auto* o_algo = app.add_option("--algo", algo, "Override the solver algorithm")->check(CLI::IsMember(algos));
  auto* o_iter = app.add_option("--max-iter", max_iter, "Override the iteration limit")->check(CLI::PositiveNumber);
  auto* o_res = app.add_option("--tol-residual", tol_residual, "Override the residual tolerance")->check(CLI::PositiveNumber);
  auto* o_step = app.add_option("--tol-step", tol_step, "Override the step tolerance")->check(CLI::PositiveNumber);
  auto* o_relax = app.add_option("--relax", relax, "Constant relaxation λ");
  app.add_option("--trace", trace_path, "Write the iteration trace as CSV");
  app.add_option("--summary", summary_path, "Write the run summary as JSON (default: stdout)");

  auto* gen = app.add_subcommand("generate", "Write a seeded box-constrained affine problem with a known zero");
  std::uint64_t seed = 0;
  long long dim = 4;
  std::string gen_algo = "fbf", out_path;
  gen->add_option("--seed", seed, "Random seed")->required();
  gen->add_option("--dim", dim, "Dimension")->check(CLI::Range(1, 500));
  gen->add_option("--algo", gen_algo, "Algorithm recorded in the file")->check(CLI::IsMember({"weak", "strong", "fbf", "tseng"}));
  gen->add_option("--out", out_path, "Output path (default: stdout)");

  auto* chk = app.add_subcommand("check", "Parse and validate a problem file, then print it in normal form");
  std::string chk_problem;
  chk->add_option("--problem", chk_problem, "Problem file (YAML)")->required();

  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return code(ExitCode::usage);
  }

  if (*gen) {
    auto pf = io::generate_problem(seed, static_cast<warpedprox::Index>(dim), gen_algo);
    std::string text = io::write_problem_text(pf);
    if (out_path.empty()) {
      std::cout << text;
    } else if (!write_text(out_path, text)) {
      std::cerr << "error: cannot write '" << out_path << "'\n";
      return code(ExitCode::io);
    }
    return code(ExitCode::converged);
  }

  if (*chk) {
    auto loaded = load(chk_problem, {});
    if (!loaded.problem) return code(loaded.failure);
    std::cout << io::write_problem_text(*loaded.problem);
    return 0;
  }

  if (problem.empty()) {
    std::cerr << "error: --problem is required\n" << app.help();
    return code(ExitCode::usage);
  }
  if (*o_algo) overrides.algo = algo;
  if (*o_iter) overrides.max_iter = max_iter;
  if (*o_res) overrides.tol_residual = tol_residual;
  if (*o_step) overrides.tol_step = tol_step;
  if (*o_relax) overrides.relax = relax;
  return run(problem, overrides, trace_path, summary_path);
}
