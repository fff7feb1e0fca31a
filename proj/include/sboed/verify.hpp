#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace sboed {

struct CheckResult {
  bool passed = false;
  std::string detail;  // measured quantities against their tolerances
  double seconds = 0.0;
};

struct Check {
  std::string name;
  std::function<CheckResult()> run;
};

/// Oracle and property checks on small problems.
CheckResult check_adjoint();          // dot test 1e-10, tangent vs FD 1e-4 on 16x16
CheckResult check_linear_gaussian();  // MAP 1e-6, GEVP 1e-6, IG vs KL 1e-5 on 8x8
CheckResult check_terminal_equivalence();         // K = 4, d = 2, observed prefix, 1e-8
CheckResult check_conditional_eig();  // N_s = 1e4 within 3 standard errors, argmax
CheckResult check_eig_monotone();     // exhaustive over supersets, K = 5
CheckResult check_lano_derivatives(); // FD 1e-6 for 20 inputs, causal mask bitwise
CheckResult check_invariants();       // prior, forward range, Hessian symmetry, IO

/// Criteria 1-6 followed by the invariant checks.
std::vector<Check> verify_suite();

/// Runs the checks, printing one PASS/FAIL line each; returns the failure count.
int run_checks(const std::vector<Check>& checks, std::ostream& out);

}  // namespace sboed
