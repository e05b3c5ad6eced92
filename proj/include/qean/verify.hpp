#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace qean {

struct CheckResult {
  std::string name;  // suite.check
  double measured = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  bool pass() const noexcept;
  std::size_t failures() const noexcept;
};

/// algebra, spe, qra, grad, metrics, model, features, training, cli.
const std::vector<std::string>& suite_names();
/// Number of checks a suite reports; `all` is the sum.
std::size_t expected_check_count(const std::string& suite);

/// Runs one suite, or every suite for "all", printing one line per check to
/// `log` as it goes. A suite whose check count differs from
/// expected_check_count gets an extra failing `<suite>.check_count` entry.
/// ConfigError for an unknown suite.
std::vector<SuiteReport> run_suite(const std::string& suite, std::ostream& log);

std::string format_check(const CheckResult& c);

}  // namespace qean
