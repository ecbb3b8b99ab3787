#ifndef SYMPTOMCAST_NN_LOSS_HPP
#define SYMPTOMCAST_NN_LOSS_HPP

#include "symptomcast/nn/tensor.hpp"

#include <Eigen/Core>

namespace symptomcast::nn {

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr double kSigmaFloor = 1e-4;

struct Bounds {
    double lower = 0.0;
    double upper = 1.0;
};

// log of the standard normal cdf, accurate deep into the lower tail.
double log_ndtr(double x);
double ndtr(double x);
// log(Phi(b) - Phi(a)) for a < b without cancellation in either tail.
double log_ndtr_diff(double a, double b);

struct PointNll {
    double value = 0.0;
    double d_mu = 0.0;
    double d_sigma = 0.0;
};

// -log of the normal(mu, sigma) density truncated to bounds, evaluated at x.
// sigma below kSigmaFloor is clamped and its derivative is zero.
PointNll trunc_gauss_nll_point(double x, double mu, double sigma, Bounds bounds = {});

double trunc_gauss_pdf(double x, double mu, double sigma, Bounds bounds = {});
// Mean of the truncated distribution; mu itself is only its location.
double trunc_gauss_mean(double mu, double sigma, Bounds bounds = {});

struct NllResult {
    double loss = 0.0;
    TensorXd grad_mu;
    TensorXd grad_sigma;
    Index n_observed = 0;
};

// Mean negative log-likelihood over masked pixels. When `normalizer` is
// positive it replaces the masked-pixel count in the mean (used to pool a
// mini-batch). Throws when the mask is all false.
NllResult trunc_gauss_nll(const TensorXd& mu, const TensorXd& sigma, const TensorXd& target, const Mask& mask,
                          Bounds bounds = {}, double normalizer = 0.0);

} // namespace symptomcast::nn

#endif
