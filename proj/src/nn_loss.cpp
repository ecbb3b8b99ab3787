#include "symptomcast/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace symptomcast::nn {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_phi(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

// log(1 - exp(x)) for x <= 0.
double log1mexp(double x)
{
    return x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

} // namespace

double ndtr(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_ndtr(double x)
{
    if (x > -35.0) {
        return std::log(ndtr(x));
    }
    // Mills-ratio asymptotic series; relative error below 1e-14 past x = -35.
    const double r = 1.0 / (x * x);
    const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    return log_phi(x) - std::log(-x) + std::log(series);
}

double log_ndtr_diff(double a, double b)
{
    if (!(a < b)) {
        throw std::invalid_argument("log_ndtr_diff requires a < b");
    }
    if (b <= 0.0) {
        const double lb = log_ndtr(b);
        return lb + log1mexp(log_ndtr(a) - lb);
    }
    if (a >= 0.0) {
        const double la = log_ndtr(-a);
        return la + log1mexp(log_ndtr(-b) - la);
    }
    return std::log1p(-ndtr(a) - ndtr(-b));
}

PointNll trunc_gauss_nll_point(double x, double mu, double sigma, Bounds bounds)
{
    const bool clamped = sigma < kSigmaFloor;
    const double s = clamped ? kSigmaFloor : sigma;
    const double z = (x - mu) / s;
    const double alpha = (bounds.lower - mu) / s;
    const double beta = (bounds.upper - mu) / s;
    const double log_z = log_ndtr_diff(alpha, beta);

    // phi(alpha)/Z and phi(beta)/Z formed in log space.
    const double ra = std::exp(log_phi(alpha) - log_z);
    const double rb = std::exp(log_phi(beta) - log_z);
    // alpha * phi(alpha) vanishes for infinite-like bounds; avoid inf * 0.
    const double alpha_ra = ra == 0.0 ? 0.0 : alpha * ra;
    const double beta_rb = rb == 0.0 ? 0.0 : beta * rb;

    PointNll out;
    out.value = 0.5 * z * z + kLogSqrt2Pi + std::log(s) + log_z;
    out.d_mu = (-z + ra - rb) / s;
    out.d_sigma = clamped ? 0.0 : (1.0 - z * z + alpha_ra - beta_rb) / s;
    return out;
}

double trunc_gauss_pdf(double x, double mu, double sigma, Bounds bounds)
{
    if (x < bounds.lower || x > bounds.upper) {
        return 0.0;
    }
    return std::exp(-trunc_gauss_nll_point(x, mu, sigma, bounds).value);
}

double trunc_gauss_mean(double mu, double sigma, Bounds bounds)
{
    const double s = std::max(sigma, kSigmaFloor);
    const double alpha = (bounds.lower - mu) / s;
    const double beta = (bounds.upper - mu) / s;
    const double log_z = log_ndtr_diff(alpha, beta);
    const double m = mu + s * (std::exp(log_phi(alpha) - log_z) - std::exp(log_phi(beta) - log_z));
    return std::clamp(m, bounds.lower, bounds.upper);
}

NllResult trunc_gauss_nll(const TensorXd& mu, const TensorXd& sigma, const TensorXd& target, const Mask& mask,
                          Bounds bounds, double normalizer)
{
    if (mu.shape() != sigma.shape() || mu.shape() != target.shape() || mask.size() != mu.size()) {
        throw std::invalid_argument("trunc_gauss_nll shape mismatch: mu " + shape_str(mu.shape()) + ", sigma " +
                                    shape_str(sigma.shape()) + ", target " + shape_str(target.shape()));
    }
    const Index n = mask.count();
    if (n == 0) {
        throw std::invalid_argument("trunc_gauss_nll: mask selects no pixels");
    }
    const double denom = normalizer > 0.0 ? normalizer : static_cast<double>(n);

    NllResult r{0.0, TensorXd(mu.shape()), TensorXd(mu.shape()), n};
    for (Index i = 0; i < mu.size(); ++i) {
        if (!mask[i]) {
            continue;
        }
        const PointNll p = trunc_gauss_nll_point(target[i], mu[i], sigma[i], bounds);
        r.loss += p.value;
        r.grad_mu[i] = p.d_mu / denom;
        r.grad_sigma[i] = p.d_sigma / denom;
    }
    r.loss /= denom;
    return r;
}

} // namespace symptomcast::nn
