#ifndef SYMPTOMCAST_NN_GRADCHECK_HPP
#define SYMPTOMCAST_NN_GRADCHECK_HPP

#include "symptomcast/nn/params.hpp"
#include "symptomcast/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace symptomcast::nn {

struct GradCheckOptions {
    double eps = 1e-5;
    // Tensors larger than this are checked on a random coordinate subset.
    Index samples_per_tensor = 200;
    // Denominator floor so that two vanishing gradients compare as equal.
    double abs_floor = 1e-6;
    // Fourth-order stencil using f(x +- h) and f(x +- 2h). The plain 3-point
    // difference has O(h^2) error that dominates where the gradient is tiny.
    bool five_point = true;
    // For piecewise-linear nets: when the left and right one-sided slopes
    // disagree by more than kink_tol, the coordinate sits next to a ReLU
    // switch and the analytic value is compared with the nearer one-sided
    // slope instead. Such coordinates are counted.
    bool kink_aware = false;
    double kink_tol = 1e-5;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst; // "<variable index>[<coordinate>]"
    Index checked = 0;
    Index kinks = 0;
};

double relative_error(double analytic, double numeric, double abs_floor);

// Central differences of `loss` with respect to each coordinate of
// `variables`, compared against `analytic` (same shapes, computed beforehand
// at the unperturbed point).
GradCheckResult grad_check(std::span<TensorXd* const> variables, std::span<const TensorXd* const> analytic,
                           const std::function<double()>& loss, const GradCheckOptions& options = {});

// Same check over every tensor of a ParamSet. `loss_and_grad` must evaluate
// the loss and leave fresh gradients in the ParamSet; `loss` only evaluates.
GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss,
                           const std::function<void()>& loss_and_grad, const GradCheckOptions& options = {});

} // namespace symptomcast::nn

#endif
