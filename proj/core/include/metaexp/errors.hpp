#pragma once

#include <stdexcept>
#include <string>

namespace metaexp {

// Violated precondition or invariant: a bug in the caller, not a data problem.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf (or other numeric breakdown) surfaced mid-computation.  `where`
// names the op / parameter segment / worker that tripped it so faults are
// attributable without a debugger.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& what, std::string where)
      : std::runtime_error(what + " [at " + where + "]"), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// Rejected configuration (bad key, out-of-range value, inconsistent combo).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An oracle could not establish a trustworthy reference value (e.g. the
// function under test is not deterministic), as opposed to a check failing.
class OracleInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace metaexp
