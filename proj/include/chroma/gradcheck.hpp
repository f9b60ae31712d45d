#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chroma {

struct GradcheckResult {
    std::string op;
    int instances = 0;
    double max_rel_error = 0.0;  // worst over instances and inputs
    bool passed = false;
};

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int instances = 5;
    double tolerance = 1e-3;
    // Scales the analytic gradient of this op by 1.05 before comparing, so the
    // harness itself can be shown to catch a wrong backward pass.
    std::string inject_fault;
};

// Central finite differences against the tape's vector-Jacobian products for
// every differentiable op. Relative error is max|analytic - numeric| divided
// by the larger infinity norm of the two.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options = {});

std::vector<std::string> gradcheck_ops();

}  // namespace chroma
