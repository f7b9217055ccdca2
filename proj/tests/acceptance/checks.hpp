#pragma once

// Acceptance criteria as runnable checks. Each check returns one result
// line; the pendulum suite returns two (end-to-end and ablation).

#include <string>
#include <vector>

namespace d4pg::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Fast oracle and property checks.
std::vector<CheckResult> run_quick();
// Everything, including the learning runs (tens of minutes).
std::vector<CheckResult> run_all();
// One group by name; see group_names(). Throws std::invalid_argument.
std::vector<CheckResult> run_group(const std::string& name);
const std::vector<std::string>& group_names();

std::string format(const CheckResult& r);

// Where learning runs leave their CSVs and checkpoints.
std::string runs_directory();

}  // namespace d4pg::checks
