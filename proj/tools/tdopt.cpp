// Command-line front end. Three subcommands on a shared config format:
//   solve  -- run the support-expansion solver, write CSVs and a report
//   check  -- equivalence-theorem certificate for an existing design
//   curve  -- export the Psi curve of an existing design
// Exit codes: 0 success, 1 config/CSV/IO problem, 2 finished without a
// certificate (or check failed), 3 starting design with T = 0.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdopt/config.hpp"
#include "tdopt/criterion.hpp"
#include "tdopt/design.hpp"
#include "tdopt/errors.hpp"
#include "tdopt/solver.hpp"
#include "tdopt/util.hpp"

namespace {

using namespace tdopt;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoCertificate = 2;
constexpr int kExitInvalidStart = 3;

struct Overrides {
  std::optional<int> threads;
  std::optional<unsigned> seed;
  std::optional<double> tol;
};

CriterionOptions crit_options(const SolveOptions& s) {
  CriterionOptions c;
  c.multistart = s.multistart;
  c.seed = s.seed;
  c.threads = s.threads;
  c.fit = s.fit;
  c.grid_points = s.grid_points;
  c.refine_tol_frac = s.refine_tol_frac;
  return c;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os)
    throw std::runtime_error("cannot open output file '" + path + "'");
  return os;
}

std::string model_label(const BuiltProblem& bp, std::size_t i) {
  if (i < bp.model_names.size()) return bp.model_names[i];
  return "model " + std::to_string(i + 1);
}

//! Two stacked lines (points, then weights), columns aligned.
void write_design_rows(std::ostream& os, const Design& d) {
  std::vector<std::string> xs, ws;
  for (std::size_t k = 0; k < d.size(); ++k) {
    xs.push_back(util::g17(d.x(k)));
    ws.push_back(util::g17(d.weight(k)));
  }
  auto row = [&](const char* tag, const std::vector<std::string>& cells) {
    os << "  " << tag << ':';
    for (std::size_t k = 0; k < cells.size(); ++k) {
      std::size_t width = std::max(xs[k].size(), ws[k].size());
      os << "  " << std::string(width - cells[k].size(), ' ') << cells[k];
    }
    os << '\n';
  };
  row("x", xs);
  row("w", ws);
}

std::string solve_report_text(const SolveReport& rep,
                              const ProblemConfig& cfg) {
  std::ostringstream os;
  os << "status     = "
     << (rep.converged ? "converged (efficiency certificate reached)"
                       : "stopped without certificate (iteration limit)")
     << '\n';
  os << "iterations = " << rep.iterations << '\n';
  os << "t_value    = " << util::g17(rep.value) << '\n';
  os << "efficiency = " << util::g17(rep.efficiency) << '\n';
  os << "design (" << rep.design.size() << " points):\n";
  write_design_rows(os, rep.design);
  if (!rep.warnings.empty()) {
    os << "warnings:\n";
    for (const std::string& w : rep.warnings) os << "  - " << w << '\n';
  }
  os << "\n# --- effective configuration ---\n";
  cfg.echo(os);
  return os.str();
}

ProblemConfig load_config(const std::string& path, const Overrides& ov) {
  ProblemConfig cfg = ProblemConfig::parse_file(path);
  if (ov.threads) cfg.solver.threads = *ov.threads;
  if (ov.seed) cfg.solver.seed = *ov.seed;
  return cfg;
}

Design load_design(const std::string& path) {
  std::ifstream is(path);
  if (!is)
    throw std::runtime_error("cannot open design file '" + path + "'");
  return Design::read_csv(is);
}

int cmd_solve(const std::string& config_path, const std::string& out_prefix,
              const Overrides& ov) {
  ProblemConfig cfg = load_config(config_path, ov);
  if (ov.tol) cfg.solver.eff_tol = *ov.tol;
  if (!out_prefix.empty()) {
    cfg.output.design_csv = out_prefix + "_design.csv";
    cfg.output.trace_csv = out_prefix + "_trace.csv";
    cfg.output.curve_csv = out_prefix + "_curve.csv";
    cfg.output.report = out_prefix + "_report.txt";
  }
  BuiltProblem bp = cfg.build();

  std::optional<SolveReport> rep;
  try {
    rep.emplace(solve(bp.problem, bp.start, bp.options));
  } catch (const invalid_start_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    // With T(start) = 0 every active comparison is matched exactly; name
    // the pairs so a misconfigured model list is easy to spot.
    try {
      CriterionEval ev =
          t_value(bp.problem, bp.start, nullptr, crit_options(bp.options));
      std::string who;
      const auto& comps = bp.problem.comparisons();
      for (std::size_t c = 0; c < comps.size(); ++c) {
        if (comps[c].p * ev.fits[c].sse > 0) continue;
        if (!who.empty()) who += ", ";
        who += model_label(bp, comps[c].fixed) + " vs " +
               model_label(bp, comps[c].candidate);
      }
      if (!who.empty())
        std::cerr << "degenerate comparisons (the candidate reproduces the "
                     "fixed model): "
                  << who << '\n';
    } catch (const std::exception&) {
      // diagnosis is best-effort; the exit code already tells the story
    }
    return kExitInvalidStart;
  }

  if (cfg.output.design_csv) {
    std::ofstream os = open_out(*cfg.output.design_csv);
    rep->design.write_csv(os);
  }
  if (cfg.output.trace_csv) {
    std::ofstream os = open_out(*cfg.output.trace_csv);
    write_trace_csv(os, rep->trace);
  }
  if (cfg.output.curve_csv) {
    CriterionEval ev =
        t_value(bp.problem, rep->design, nullptr, crit_options(bp.options));
    std::ofstream os = open_out(*cfg.output.curve_csv);
    write_psi_curve_csv(os, bp.problem, ev, bp.options.grid_points);
  }
  std::string text = solve_report_text(*rep, cfg);
  std::cout << text;
  if (cfg.output.report) {
    std::ofstream os = open_out(*cfg.output.report);
    os << text;
  }
  return rep->converged ? kExitOk : kExitNoCertificate;
}

int cmd_check(const std::string& config_path, const std::string& design_path,
              const Overrides& ov) {
  ProblemConfig cfg = load_config(config_path, ov);
  double tol = ov.tol ? *ov.tol : cfg.check_tol;
  BuiltProblem bp = cfg.build();
  Design d = load_design(design_path);

  OptimalityReport r =
      check_optimality(bp.problem, d, tol, crit_options(bp.options));
  std::cout << "t_value   = " << util::g17(r.t_value) << '\n';
  std::cout << "max_psi   = " << util::g17(r.max_psi) << '\n';
  std::cout << "gap       = " << util::g17(r.gap) << '\n';
  if (r.t_value > 0)
    std::cout << "gap ratio = " << util::g17(r.max_psi / r.t_value)
              << "  (max_psi / t_value)\n";
  std::cout << "tol       = " << util::g17(r.tol) << '\n';
  std::cout << "support:\n";
  for (std::size_t k = 0; k < d.size(); ++k)
    std::cout << "  x = " << util::g17(d.x(k)) << "   w = "
              << util::g17(d.weight(k)) << "   psi = "
              << util::g17(r.support_psi[k]) << '\n';
  if (r.zero_criterion)
    std::cout << "FAIL: the design does not separate the models (t_value = 0)\n";
  else if (r.pass)
    std::cout << "PASS: equivalence certificate holds at tol "
              << util::g17(r.tol) << '\n';
  else
    std::cout << "FAIL: Psi exceeds t_value (or is uneven on the support) "
                 "beyond tol "
              << util::g17(r.tol) << '\n';
  return r.pass ? kExitOk : kExitNoCertificate;
}

int cmd_curve(const std::string& config_path, const std::string& design_path,
              const std::string& out_path, const Overrides& ov) {
  ProblemConfig cfg = load_config(config_path, ov);
  BuiltProblem bp = cfg.build();
  Design d = load_design(design_path);

  std::string path = out_path;
  if (path.empty() && cfg.output.curve_csv) path = *cfg.output.curve_csv;
  if (path.empty())
    throw std::runtime_error(
        "curve needs --out or a curve_csv entry in [output]");

  CriterionEval ev =
      t_value(bp.problem, d, nullptr, crit_options(bp.options));
  std::ofstream os = open_out(path);
  write_psi_curve_csv(os, bp.problem, ev, bp.options.grid_points);
  std::cout << "wrote " << path << "  (t_value = " << util::g17(ev.value)
            << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "T-optimal discriminating designs for rival regression models on an "
      "interval"};
  app.require_subcommand(1);

  std::string config_path, design_path, out_path;
  Overrides ov;

  CLI::App* s_solve = app.add_subcommand(
      "solve", "compute an optimal design and write CSVs plus a report");
  s_solve->add_option("--config", config_path, "problem configuration file")
      ->required();
  s_solve->add_option("--out", out_path,
                      "path prefix for <prefix>_{design,trace,curve}.csv and "
                      "<prefix>_report.txt (overrides [output])");
  s_solve->add_option("--tol", ov.tol, "efficiency tolerance (stop at 1-tol)");

  CLI::App* s_check = app.add_subcommand(
      "check", "equivalence-theorem certificate for an existing design");
  s_check->add_option("--config", config_path, "problem configuration file")
      ->required();
  s_check->add_option("--design", design_path, "design CSV (x,weight)")
      ->required();
  s_check->add_option("--tol", ov.tol, "certificate tolerance");

  CLI::App* s_curve = app.add_subcommand(
      "curve", "write the Psi curve of an existing design as x,psi CSV");
  s_curve->add_option("--config", config_path, "problem configuration file")
      ->required();
  s_curve->add_option("--design", design_path, "design CSV (x,weight)")
      ->required();
  s_curve->add_option("--out", out_path, "output CSV path");

  for (CLI::App* c : {s_solve, s_check, s_curve}) {
    c->add_option("--threads", ov.threads, "worker thread cap");
    c->add_option("--seed", ov.seed, "multistart RNG seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (s_solve->parsed()) return cmd_solve(config_path, out_path, ov);
    if (s_check->parsed()) return cmd_check(config_path, design_path, ov);
    return cmd_curve(config_path, design_path, out_path, ov);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const invalid_start_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalidStart;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
