#include "tdopt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "tdopt/errors.hpp"
#include "tdopt/util.hpp"

namespace tdopt {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (trim(s.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw config_error("expected a number, got '" + s + "'", line);
}

int parse_int(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (trim(s.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw config_error("expected an integer, got '" + s + "'", line);
}

std::vector<double> parse_list(const std::string& s, int line) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(parse_double(tok, line));
  if (out.empty()) throw config_error("expected a list of numbers", line);
  return out;
}

std::vector<int> parse_int_list(const std::string& s, int line) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(parse_int(tok, line));
  if (out.empty()) throw config_error("expected a list of integers", line);
  return out;
}

struct TableDirectives {
  std::vector<std::vector<double>> rows;
  std::optional<double> lower_pairs;
  struct Pair {
    int i, j;
    double p;
  };
  std::vector<Pair> pairs;
  int line = 0;
};

void write_list(std::ostream& os, const char* key,
                std::span<const double> v) {
  os << key << " =";
  for (double x : v) os << ' ' << util::g17(x);
  os << '\n';
}

}  // namespace

ProblemConfig ProblemConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file '" + path + "'");
  return parse(is, path);
}

ProblemConfig ProblemConfig::parse(std::istream& is, const std::string& origin) {
  ProblemConfig cfg;
  enum class Section { None, Space, Model, Prior, Table, Start, Solver, Output };
  Section section = Section::None;
  bool space_seen = false;
  TableDirectives table;
  std::set<std::string> seen;  // scalar keys of the current block
  std::string line;
  int lineno = 0;

  auto once = [&](const std::string& key, int ln) {
    if (!seen.insert(key).second)
      throw config_error("duplicate key '" + key + "'", ln);
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;

    if (body.front() == '[') {
      if (body.back() != ']')
        throw config_error("malformed section header '" + body + "'", lineno);
      std::string name = trim(body.substr(1, body.size() - 2));
      seen.clear();
      if (name == "space") {
        if (space_seen) throw config_error("repeated [space] section", lineno);
        section = Section::Space;
        space_seen = true;
      } else if (name == "model") {
        section = Section::Model;
        cfg.models.emplace_back();
      } else if (name == "prior") {
        section = Section::Prior;
        cfg.priors.emplace_back();
        cfg.priors.back().line = lineno;
      } else if (name == "table") {
        section = Section::Table;
        table.line = lineno;
      } else if (name == "design") {
        section = Section::Start;
      } else if (name == "solver") {
        section = Section::Solver;
      } else if (name == "output") {
        section = Section::Output;
      } else {
        throw config_error("unknown section [" + name + "]", lineno);
      }
      continue;
    }

    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw config_error("expected 'key = value', got '" + body + "'", lineno);
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error("expected 'key = value', got '" + body + "'", lineno);

    switch (section) {
      case Section::None:
        throw config_error("'" + key + "' appears outside any section", lineno);
      case Section::Space:
        once(key, lineno);
        if (key == "lower")
          cfg.space.lower = parse_double(value, lineno);
        else if (key == "upper")
          cfg.space.upper = parse_double(value, lineno);
        else
          throw config_error("unknown [space] key '" + key + "'", lineno);
        break;
      case Section::Model: {
        ModelConfig& m = cfg.models.back();
        once(key, lineno);
        if (key == "name") {
          if (value.find_first_of(" \t") != std::string::npos)
            throw config_error("model names cannot contain spaces", lineno);
          m.name = value;
        } else if (key == "type") {
          auto b = builtin_from_name(value);
          if (!b)
            throw config_error("unknown builtin model '" + value + "'", lineno);
          m.builtin = *b;
        } else if (key == "expr") {
          m.expression = value;
        } else if (key == "lower") {
          m.lower = parse_list(value, lineno);
        } else if (key == "upper") {
          m.upper = parse_list(value, lineno);
        } else if (key == "fixed") {
          m.fixed = parse_list(value, lineno);
        } else {
          throw config_error("unknown [model] key '" + key + "'", lineno);
        }
        break;
      }
      case Section::Prior: {
        PriorConfig& pr = cfg.priors.back();
        if (key == "atom") {
          auto bar = value.find('|');
          if (bar == std::string::npos)
            throw config_error("atom lines read 'atom = mass | values...'",
                               lineno);
          DiscretePrior::Atom atom;
          atom.tau = parse_double(trim(value.substr(0, bar)), lineno);
          atom.lambda = parse_list(trim(value.substr(bar + 1)), lineno);
          pr.atoms.push_back(std::move(atom));
          break;
        }
        once(key, lineno);
        if (key == "model")
          pr.model = value;
        else if (key == "levels")
          pr.levels = parse_int(value, lineno);
        else if (key == "sigma")
          pr.sigma = parse_double(value, lineno);
        else if (key == "center")
          pr.center = parse_list(value, lineno);
        else if (key == "vary")
          pr.vary = parse_int_list(value, lineno);
        else if (key == "exponent_sign") {
          pr.exponent_sign = parse_double(value, lineno);
          if (pr.exponent_sign != 1.0 && pr.exponent_sign != -1.0)
            throw config_error("exponent_sign must be -1 or 1", lineno);
        } else {
          throw config_error("unknown [prior] key '" + key + "'", lineno);
        }
        break;
      }
      case Section::Table:
        if (key == "row") {
          table.rows.push_back(parse_list(value, lineno));
        } else if (key == "pair") {
          std::istringstream ps(value);
          std::string si, sj, sp;
          if (!(ps >> si >> sj >> sp))
            throw config_error("pair lines read 'pair = i j weight'", lineno);
          std::string rest;
          if (ps >> rest)
            throw config_error("pair lines read 'pair = i j weight'", lineno);
          table.pairs.push_back({parse_int(si, lineno), parse_int(sj, lineno),
                                 parse_double(sp, lineno)});
        } else if (key == "lower_pairs") {
          once(key, lineno);
          table.lower_pairs = parse_double(value, lineno);
        } else {
          throw config_error("unknown [table] key '" + key + "'", lineno);
        }
        break;
      case Section::Start:
        once(key, lineno);
        if (key == "support")
          cfg.start_support = parse_list(value, lineno);
        else if (key == "weights")
          cfg.start_weights = parse_list(value, lineno);
        else if (key == "grid")
          cfg.start_grid = parse_int(value, lineno);
        else
          throw config_error("unknown [design] key '" + key + "'", lineno);
        break;
      case Section::Solver: {
        once(key, lineno);
        SolveOptions& s = cfg.solver;
        if (key == "grid_points")
          s.grid_points = parse_int(value, lineno);
        else if (key == "eff_tol")
          s.eff_tol = parse_double(value, lineno);
        else if (key == "max_outer")
          s.max_outer = parse_int(value, lineno);
        else if (key == "method") {
          if (value == "qp")
            s.step2_method = Step2Method::Qp;
          else if (value == "gradient")
            s.step2_method = Step2Method::Gradient;
          else
            throw config_error("method must be 'qp' or 'gradient'", lineno);
        } else if (key == "qp_rounds")
          s.step2_rounds = parse_int(value, lineno);
        else if (key == "grad_iters")
          s.step2_grad_iters = parse_int(value, lineno);
        else if (key == "grad_tol")
          s.step2_grad_tol = parse_double(value, lineno);
        else if (key == "prune")
          s.prune_threshold = parse_double(value, lineno);
        else if (key == "merge_tol")
          s.merge_tol = parse_double(value, lineno);
        else if (key == "condense")
          s.condense_frac = parse_double(value, lineno);
        else if (key == "multistart")
          s.multistart = parse_int(value, lineno);
        else if (key == "seed")
          s.seed = static_cast<unsigned>(parse_int(value, lineno));
        else if (key == "threads")
          s.threads = parse_int(value, lineno);
        else if (key == "refine_tol_frac")
          s.refine_tol_frac = parse_double(value, lineno);
        else if (key == "check_tol")
          cfg.check_tol = parse_double(value, lineno);
        else
          throw config_error("unknown [solver] key '" + key + "'", lineno);
        break;
      }
      case Section::Output:
        once(key, lineno);
        if (key == "design_csv")
          cfg.output.design_csv = value;
        else if (key == "trace_csv")
          cfg.output.trace_csv = value;
        else if (key == "curve_csv")
          cfg.output.curve_csv = value;
        else if (key == "report")
          cfg.output.report = value;
        else
          throw config_error("unknown [output] key '" + key + "'", lineno);
        break;
    }
  }

  if (!space_seen)
    throw config_error("missing [space] section in '" + origin + "'");
  if (!(cfg.space.lower < cfg.space.upper))
    throw config_error("[space] needs lower < upper");

  // default model names m1, m2, ...
  for (std::size_t i = 0; i < cfg.models.size(); ++i)
    if (cfg.models[i].name.empty())
      cfg.models[i].name = "m" + std::to_string(i + 1);

  int styles = (!table.rows.empty() ? 1 : 0) + (table.lower_pairs ? 1 : 0) +
               (!table.pairs.empty() ? 1 : 0);
  if (styles > 1)
    throw config_error("[table] mixes row/pair/lower_pairs styles", table.line);
  const std::size_t n = cfg.models.size();
  if (!table.rows.empty()) {
    cfg.table = table.rows;
  } else if (styles == 1) {
    if (n < 2)
      throw config_error("[table] needs at least two [model] blocks",
                         table.line);
    cfg.table.assign(n, std::vector<double>(n, 0.0));
    if (table.lower_pairs) {
      for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) cfg.table[i][j] = *table.lower_pairs;
    } else {
      for (const auto& pr : table.pairs) {
        if (pr.i < 1 || pr.j < 1 || pr.i > static_cast<int>(n) ||
            pr.j > static_cast<int>(n) || pr.i == pr.j)
          throw config_error("pair indices must be distinct and in 1.." +
                                 std::to_string(n),
                             table.line);
        cfg.table[static_cast<std::size_t>(pr.i - 1)]
                 [static_cast<std::size_t>(pr.j - 1)] = pr.p;
      }
    }
  }
  return cfg;
}

DiscretePrior ProblemConfig::expand_prior(const PriorConfig& pc,
                                          const std::vector<double>& center) {
  DiscretePrior prior;
  if (!pc.atoms.empty()) {
    if (pc.levels || pc.sigma || !pc.vary.empty())
      throw config_error("a [prior] gives either atoms or levels, not both",
                         pc.line);
    prior.atoms = pc.atoms;
  } else {
    if (!pc.levels || !pc.sigma)
      throw config_error("a generated [prior] needs levels and sigma", pc.line);
    if (*pc.levels != 3 && *pc.levels != 5)
      throw config_error("levels must be 3 or 5", pc.line);
    if (!(*pc.sigma > 0)) throw config_error("sigma must be positive", pc.line);
    if (pc.vary.empty())
      throw config_error("a generated [prior] needs vary coordinates", pc.line);
    std::set<int> uniq(pc.vary.begin(), pc.vary.end());
    if (uniq.size() != pc.vary.size())
      throw config_error("vary coordinates repeat", pc.line);
    for (int c : pc.vary)
      if (c < 1 || c > static_cast<int>(center.size()))
        throw config_error("vary coordinate " + std::to_string(c) +
                               " is out of range",
                           pc.line);
    const double sigma = *pc.sigma;
    const auto v = pc.vary.size();
    std::vector<int> sorted_vary(pc.vary.begin(), pc.vary.end());
    std::sort(sorted_vary.begin(), sorted_vary.end());

    const int L = *pc.levels;
    std::vector<double> offsets, level_w;
    if (L == 5) {
      for (int i = 1; i <= 5; ++i) {
        offsets.push_back(sigma * (i - 3) / 2.0);
        level_w.push_back(std::exp(-((i - 3) * (i - 3)) / 8.0));
      }
    } else {
      for (int e = -1; e <= 1; ++e) offsets.push_back(sigma * e);
    }

    std::vector<int> digits(v, 0);
    bool done = false;
    while (!done) {
      DiscretePrior::Atom atom;
      atom.lambda = center;
      double raw = 1.0;
      double sq = 0.0;
      for (std::size_t k = 0; k < v; ++k) {
        double off = offsets[static_cast<std::size_t>(digits[k])];
        atom.lambda[static_cast<std::size_t>(sorted_vary[k] - 1)] += off;
        if (L == 5)
          raw *= level_w[static_cast<std::size_t>(digits[k])];
        else
          sq += off * off;
      }
      atom.tau = (L == 5) ? raw
                          : std::exp(pc.exponent_sign * sq / (2.0 * sigma * sigma));
      prior.atoms.push_back(std::move(atom));
      std::size_t k = v;
      while (true) {
        if (k == 0) {
          done = true;
          break;
        }
        --k;
        if (++digits[k] < static_cast<int>(offsets.size())) break;
        digits[k] = 0;
      }
    }
  }
  if (prior.atoms.empty())
    throw config_error("[prior] produced no atoms", pc.line);
  double mass = 0.0;
  for (const auto& a : prior.atoms) {
    if (!(a.tau > 0))
      throw config_error("prior masses must be positive", pc.line);
    mass += a.tau;
  }
  for (auto& a : prior.atoms) a.tau /= mass;
  return prior;
}

BuiltProblem ProblemConfig::build() const {
  if (models.size() < 2)
    throw config_error("a problem needs at least two [model] blocks");

  std::vector<std::shared_ptr<const Model>> built;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const ModelConfig& m = models[i];
    if (!index.emplace(m.name, i).second)
      throw config_error("duplicate model name '" + m.name + "'");
    if (m.builtin && m.expression)
      throw config_error("model '" + m.name + "' gives both type and expr");
    if (!m.builtin && !m.expression)
      throw config_error("model '" + m.name + "' needs a type or an expr");

    std::size_t dim = m.builtin ? builtin_dim(*m.builtin) : 0;
    std::optional<expr::ModelExpr> parsed;
    if (m.expression) {
      try {
        parsed = expr::ModelExpr::parse(*m.expression);
      } catch (const expr::parse_error& e) {
        throw config_error("model '" + m.name + "' expression: " + e.what());
      }
      dim = parsed->param_count();
      if (dim == 0)
        throw config_error("model '" + m.name +
                           "' expression has no parameters");
    }

    std::optional<ParamSpace> space;
    try {
      if (m.lower || m.upper) {
        if (!m.lower || !m.upper)
          throw config_error("model '" + m.name +
                             "' needs both lower and upper");
        space.emplace(*m.lower, *m.upper);
      } else if (m.fixed) {
        space.emplace(ParamSpace::centered(*m.fixed));
      } else {
        throw config_error("model '" + m.name +
                           "' needs a parameter box (lower/upper or fixed)");
      }
      if (space->dim() != dim)
        throw config_error("model '" + m.name + "' box has dimension " +
                           std::to_string(space->dim()) + ", expected " +
                           std::to_string(dim));
      if (m.fixed) {
        if (m.fixed->size() != dim)
          throw config_error("model '" + m.name + "' fixed values must have " +
                             std::to_string(dim) + " entries");
        if (!space->contains(*m.fixed))
          throw config_error("model '" + m.name +
                             "' fixed values lie outside the box");
      }
      if (m.builtin) {
        built.push_back(
            std::make_shared<Model>(make_builtin(*m.builtin, *space)));
      } else {
        built.push_back(
            std::make_shared<Model>(to_model(*parsed, *space, m.name)));
      }
    } catch (const config_error&) {
      throw;
    } catch (const std::exception& e) {
      throw config_error("model '" + m.name + "': " + e.what());
    }
  }

  std::vector<ModelPriorSpec> specs(models.size());
  for (std::size_t i = 0; i < models.size(); ++i)
    if (models[i].fixed) specs[i].fixed = models[i].fixed;
  for (const PriorConfig& pc : priors) {
    auto it = index.find(pc.model);
    if (it == index.end())
      throw config_error("[prior] names unknown model '" + pc.model + "'",
                         pc.line);
    std::size_t i = it->second;
    if (specs[i].prior)
      throw config_error("model '" + pc.model + "' has two priors", pc.line);
    std::vector<double> center;
    if (pc.center)
      center = *pc.center;
    else if (models[i].fixed)
      center = *models[i].fixed;
    else if (!pc.atoms.empty())
      center.assign(built[i]->dim(), 0.0);  // unused by explicit atoms
    else
      throw config_error("[prior] for '" + pc.model +
                             "' needs a center (or fixed values on the model)",
                         pc.line);
    if (center.size() != built[i]->dim())
      throw config_error("[prior] center for '" + pc.model + "' must have " +
                             std::to_string(built[i]->dim()) + " entries",
                         pc.line);
    specs[i].prior = expand_prior(pc, center);
    specs[i].fixed.reset();  // the prior replaces the nominal values
  }

  if (table.empty())
    throw config_error("missing [table] section");

  Interval space = this->space;
  ComparisonProblem problem = [&] {
    try {
      return expand_bayes(built, specs, table, space);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();

  Design start = [&] {
    try {
      if (start_support) {
        if (start_weights) {
          if (start_weights->size() != start_support->size())
            throw config_error(
                "[design] support and weights differ in length");
          return Design(*start_support, *start_weights);
        }
        return Design::uniform(*start_support);
      }
      if (start_weights)
        throw config_error("[design] weights need an explicit support");
      return Design::grid(space, start_grid);
    } catch (const config_error&) {
      throw;
    } catch (const std::exception& e) {
      throw config_error(std::string("[design]: ") + e.what());
    }
  }();
  for (std::size_t k = 0; k < start.size(); ++k)
    if (!space.contains(start.x(k)))
      throw config_error("[design] point " + util::g17(start.x(k)) +
                         " lies outside the design interval");

  std::vector<std::string> names;
  for (const ModelConfig& m : models) names.push_back(m.name);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!specs[i].prior || specs[i].prior->atoms.size() < 2) continue;
    for (std::size_t k = 0; k < specs[i].prior->atoms.size(); ++k)
      names.push_back(models[i].name + "[" + std::to_string(k + 1) + "]");
  }

  return BuiltProblem{std::move(problem), std::move(start), solver, check_tol,
                      std::move(names)};
}

void ProblemConfig::echo(std::ostream& os) const {
  os << "[space]\n";
  os << "lower = " << util::g17(space.lower) << '\n';
  os << "upper = " << util::g17(space.upper) << "\n\n";

  for (const ModelConfig& m : models) {
    os << "[model]\n";
    os << "name = " << m.name << '\n';
    if (m.builtin) os << "type = " << builtin_name(*m.builtin) << '\n';
    if (m.expression) os << "expr = " << *m.expression << '\n';
    if (m.lower) write_list(os, "lower", *m.lower);
    if (m.upper) write_list(os, "upper", *m.upper);
    if (m.fixed) write_list(os, "fixed", *m.fixed);
    os << '\n';
  }

  for (const PriorConfig& pr : priors) {
    os << "[prior]\n";
    os << "model = " << pr.model << '\n';
    if (pr.levels) os << "levels = " << *pr.levels << '\n';
    if (pr.sigma) os << "sigma = " << util::g17(*pr.sigma) << '\n';
    if (pr.center) write_list(os, "center", *pr.center);
    if (!pr.vary.empty()) {
      os << "vary =";
      for (int c : pr.vary) os << ' ' << c;
      os << '\n';
    }
    if (pr.levels && *pr.levels == 3)
      os << "exponent_sign = " << util::g17(pr.exponent_sign) << '\n';
    for (const auto& a : pr.atoms) {
      os << "atom = " << util::g17(a.tau) << " |";
      for (double v : a.lambda) os << ' ' << util::g17(v);
      os << '\n';
    }
    os << '\n';
  }

  if (!table.empty()) {
    os << "[table]\n";
    for (const auto& row : table) write_list(os, "row", row);
    os << '\n';
  }

  os << "[design]\n";
  if (start_support) write_list(os, "support", *start_support);
  if (start_weights) write_list(os, "weights", *start_weights);
  if (!start_support) os << "grid = " << start_grid << '\n';
  os << '\n';

  os << "[solver]\n";
  os << "grid_points = " << solver.grid_points << '\n';
  os << "eff_tol = " << util::g17(solver.eff_tol) << '\n';
  os << "max_outer = " << solver.max_outer << '\n';
  os << "method = "
     << (solver.step2_method == Step2Method::Qp ? "qp" : "gradient") << '\n';
  os << "qp_rounds = " << solver.step2_rounds << '\n';
  os << "grad_iters = " << solver.step2_grad_iters << '\n';
  os << "grad_tol = " << util::g17(solver.step2_grad_tol) << '\n';
  os << "prune = " << util::g17(solver.prune_threshold) << '\n';
  os << "merge_tol = " << util::g17(solver.merge_tol) << '\n';
  os << "condense = " << util::g17(solver.condense_frac) << '\n';
  os << "multistart = " << solver.multistart << '\n';
  os << "seed = " << solver.seed << '\n';
  os << "threads = " << solver.threads << '\n';
  os << "refine_tol_frac = " << util::g17(solver.refine_tol_frac) << '\n';
  os << "check_tol = " << util::g17(check_tol) << '\n';

  bool any_output = output.design_csv || output.trace_csv || output.curve_csv ||
                    output.report;
  if (any_output) {
    os << "\n[output]\n";
    if (output.design_csv) os << "design_csv = " << *output.design_csv << '\n';
    if (output.trace_csv) os << "trace_csv = " << *output.trace_csv << '\n';
    if (output.curve_csv) os << "curve_csv = " << *output.curve_csv << '\n';
    if (output.report) os << "report = " << *output.report << '\n';
  }
}

}  // namespace tdopt
