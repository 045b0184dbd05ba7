#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lacovl/tensor.hpp"

namespace lacovl {

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    // One-sided slopes disagreeing by more than this (relative) mark a
    // non-differentiable point; the element is skipped and reported.
    double kink_tol = 0.05;
};

struct GradCheckEntry {
    std::size_t index;
    double analytic;
    double numeric;
    double rel_err;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::vector<std::size_t> skipped_kinks;
    std::vector<GradCheckEntry> failures;
};

// Central-difference check of `analytic` against a pure scalar evaluation.
// `values` is perturbed in place element by element and restored; eval()
// must recompute the scalar from the current buffer contents.
GradCheckReport check_against_fd(std::vector<double>& values, const std::vector<double>& analytic,
                                 const std::function<double()>& eval,
                                 const GradCheckOptions& opts = {});

// Convenience wrapper for a differentiable Tensor -> scalar function.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts = {});

}  // namespace lacovl
