#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pslab {

// Self-check suite shared by `pslab check` and the acceptance tests. Each
// check builds its own configs, runs the relevant engines, and reports one
// pass/fail with a short numeric summary.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

CheckResult check_degeneration_equivalence();
CheckResult check_gradient_conservation();
CheckResult check_gradient_oracle();
CheckResult check_aggregation_oracle();
CheckResult check_timing_closed_form();
CheckResult check_throughput_reproduction();
CheckResult check_accuracy_preservation();
CheckResult check_tuning_schedule();
CheckResult check_gib_wire_bound();
CheckResult check_determinism(const std::string& scratch_dir);

std::vector<CheckResult> run_all_checks(const std::string& scratch_dir);

uint64_t fnv1a64(const void* data, size_t bytes);

}  // namespace pslab
