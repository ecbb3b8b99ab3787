#include "symptomcast/nn/gradcheck.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace symptomcast::nn {

double relative_error(double analytic, double numeric, double abs_floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(std::span<TensorXd* const> variables, std::span<const TensorXd* const> analytic,
                           const std::function<double()>& loss, const GradCheckOptions& options)
{
    if (variables.size() != analytic.size()) {
        throw std::invalid_argument("grad_check: variable and gradient lists differ in length");
    }
    std::mt19937_64 rng(options.seed);
    GradCheckResult result;
    for (std::size_t v = 0; v < variables.size(); ++v) {
        TensorXd& x = *variables[v];
        const TensorXd& g = *analytic[v];
        if (x.shape() != g.shape()) {
            throw std::invalid_argument("grad_check: gradient shape " + shape_str(g.shape()) +
                                        " does not match variable " + shape_str(x.shape()));
        }
        std::vector<Index> coords(static_cast<std::size_t>(x.size()));
        std::iota(coords.begin(), coords.end(), Index{0});
        if (x.size() > options.samples_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(options.samples_per_tensor));
            std::sort(coords.begin(), coords.end());
        }
        for (Index i : coords) {
            const double saved = x[i];
            auto at = [&](double offset) {
                x[i] = saved + offset;
                return loss();
            };
            const double h = options.eps;
            const double fp = at(h), fm = at(-h);
            double numeric = (fp - fm) / (2.0 * h);
            if (options.five_point || options.kink_aware) {
                const double fp2 = at(2.0 * h), fm2 = at(-2.0 * h);
                numeric = (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * h);
                if (options.kink_aware) {
                    const double f0 = at(0.0);
                    const double right = (-3.0 * f0 + 4.0 * fp - fp2) / (2.0 * h);
                    const double left = (3.0 * f0 - 4.0 * fm + fm2) / (2.0 * h);
                    if (relative_error(left, right, options.abs_floor) > options.kink_tol) {
                        // a ReLU switched inside the stencil; only one side is smooth at x
                        numeric = std::abs(left - g[i]) < std::abs(right - g[i]) ? left : right;
                        ++result.kinks;
                    }
                }
            }
            x[i] = saved;
            const double err = relative_error(g[i], numeric, options.abs_floor);
            ++result.checked;
            if (err > result.max_rel_error || !std::isfinite(err)) {
                result.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
                result.worst = std::to_string(v) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return result;
}

GradCheckResult grad_check(ParamSet& params, const std::function<double()>& loss,
                           const std::function<void()>& loss_and_grad, const GradCheckOptions& options)
{
    params.zero_grad();
    loss_and_grad();
    std::vector<TensorXd> grads;
    std::vector<TensorXd*> vars;
    grads.reserve(params.size());
    for (auto& p : params) {
        grads.push_back(p.grad);
        vars.push_back(&p.value);
    }
    std::vector<const TensorXd*> grad_ptrs;
    for (const auto& g : grads) {
        grad_ptrs.push_back(&g);
    }
    return grad_check(vars, grad_ptrs, loss, options);
}

} // namespace symptomcast::nn
