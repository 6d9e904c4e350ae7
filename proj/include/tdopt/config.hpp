#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tdopt/criterion.hpp"
#include "tdopt/solver.hpp"

namespace tdopt {

//! One [model] block: a builtin family or an expression, an optional
//! parameter box, and optional nominal values. A missing box defaults to
//! nominal +- 10*|nominal| per coordinate.
struct ModelConfig {
  std::string name;
  std::optional<Builtin> builtin;
  std::optional<std::string> expression;
  std::optional<std::vector<double>> lower, upper;
  std::optional<std::vector<double>> fixed;
};

//! One [prior] block, attached to a model by name. Either explicit atoms or
//! a generated grid: `levels = 5` places points at center + sigma*(i-3)/2
//! (i = 1..5) on each varying coordinate with per-level weights
//! proportional to exp(-(i-3)^2/8); `levels = 3` is the full factorial
//! center + sigma*e, e in {-1,0,1}^v, with atom weights proportional to
//! exp(exponent_sign * |lambda-center|^2 / (2 sigma^2)).
struct PriorConfig {
  std::string model;
  std::vector<DiscretePrior::Atom> atoms;
  std::optional<int> levels;
  std::optional<double> sigma;
  std::optional<std::vector<double>> center;
  std::vector<int> vary;
  double exponent_sign = -1.0;
  int line = 0;
};

struct OutputConfig {
  std::optional<std::string> design_csv;
  std::optional<std::string> trace_csv;
  std::optional<std::string> curve_csv;
  std::optional<std::string> report;
};

//! Fully assembled problem, ready to solve.
struct BuiltProblem {
  ComparisonProblem problem;
  Design start;
  SolveOptions options;
  double check_tol;
  //! One label per model of the expanded problem; rows appended for the
  //! atoms of a prior on model `name` are labeled `name[k]`.
  std::vector<std::string> model_names;
};

//! Parsed configuration file. The format is flat sectioned text
//! ([space]/[model]/[prior]/[table]/[design]/[solver]/[output] blocks of
//! `key = value` lines); see the bundled configs for examples.
struct ProblemConfig {
  Interval space;
  std::vector<ModelConfig> models;
  std::vector<PriorConfig> priors;
  //! Comparison weight matrix, resolved from the [table] block.
  std::vector<std::vector<double>> table;
  SolveOptions solver;
  //! Explicit starting design, or a uniform grid of start_grid points.
  std::optional<std::vector<double>> start_support;
  std::optional<std::vector<double>> start_weights;
  int start_grid = 11;
  double check_tol = 1e-3;
  OutputConfig output;

  static ProblemConfig parse_file(const std::string& path);
  static ProblemConfig parse(std::istream& is, const std::string& origin);

  //! Expands priors and assembles the ComparisonProblem, the starting
  //! design and the solver options. Throws config_error on semantic
  //! problems (unknown model names, missing boxes, bad dimensions).
  BuiltProblem build() const;

  //! Expands one [prior] block into a DiscretePrior for the given model
  //! dimension and nominal center.
  static DiscretePrior expand_prior(const PriorConfig& pc,
                                    const std::vector<double>& center);

  //! Writes the effective (fully defaulted) configuration; parsing the
  //! output reproduces this object's behavior exactly.
  void echo(std::ostream& os) const;
};

}  // namespace tdopt
