// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured numbers. Run all of them via ctest or directly:
//   ./pslab_acceptance
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "pslab/checks.hpp"

using pslab::CheckResult;

namespace {

void report(int index, const CheckResult& res) {
    std::printf("[%s] criterion %02d %-28s %s\n", res.pass ? "PASS" : "FAIL", index,
                res.name.c_str(), res.detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(res.pass, res.name, ": ", res.detail);
}

std::string scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / "pslab_acceptance";
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("01_degeneration_equivalence") { report(1, pslab::check_degeneration_equivalence()); }
TEST_CASE("02_gradient_conservation") { report(2, pslab::check_gradient_conservation()); }
TEST_CASE("03_gradient_oracle") { report(3, pslab::check_gradient_oracle()); }
TEST_CASE("04_aggregation_oracle") { report(4, pslab::check_aggregation_oracle()); }
TEST_CASE("05_timing_closed_form") { report(5, pslab::check_timing_closed_form()); }
TEST_CASE("06_throughput_reproduction") { report(6, pslab::check_throughput_reproduction()); }
TEST_CASE("07_accuracy_preservation") { report(7, pslab::check_accuracy_preservation()); }
TEST_CASE("08_tuning_schedule") { report(8, pslab::check_tuning_schedule()); }
TEST_CASE("09_gib_wire_bound") { report(9, pslab::check_gib_wire_bound()); }
TEST_CASE("10_determinism") { report(10, pslab::check_determinism(scratch_dir())); }
