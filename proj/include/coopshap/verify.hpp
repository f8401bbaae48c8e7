#ifndef COOPSHAP_VERIFY_HPP
#define COOPSHAP_VERIFY_HPP

#include <string>
#include <vector>

#include "coopshap/harness.hpp"

namespace coopshap::verify {

struct CheckResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

constexpr int kCriteria = 12;

// Runs one acceptance criterion (1-based). 1-9 are property suites; 10-12
// run scaled-down experiments and take minutes.
CheckResult run_criterion(int id);

// The fast property suite (criteria 1-9), used by `coopshap verify`.
std::vector<CheckResult> run_property_suite();

// Desk-scale experiment configs pinned for the trend criteria.
harness::RunConfig desk_training_config();
harness::RunConfig desk_mixed_config();

}  // namespace coopshap::verify

#endif
