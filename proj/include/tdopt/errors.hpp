#pragma once

#include <stdexcept>
#include <string>

namespace tdopt {

//! A model or expression evaluation left the domain of definition
//! (non-finite value, log of a nonpositive number, division by zero,
//! negative base with fractional exponent, ...).
class numeric_domain_error : public std::runtime_error {
public:
  explicit numeric_domain_error(const std::string& what)
      : std::runtime_error(what) {}
};

//! A design operation would leave no support point.
class degenerate_design_error : public std::runtime_error {
public:
  explicit degenerate_design_error(const std::string& what)
      : std::runtime_error(what) {}
};

//! The starting design carries no discrimination information (T = 0),
//! so the solver has no ascent direction.
class invalid_start_error : public std::runtime_error {
public:
  explicit invalid_start_error(const std::string& what)
      : std::runtime_error(what) {}
};

//! Problem with a configuration file. line() is 1-based, 0 when unknown.
class config_error : public std::runtime_error {
public:
  config_error(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                    : what),
        line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

}  // namespace tdopt
