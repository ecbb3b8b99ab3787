#include "symptomcast/profiles.hpp"

#include "symptomcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace symptomcast {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Row-wise log-sum-exp of an N x K matrix.
VectorXd log_sum_exp_rows(const MatrixXd& a)
{
    const VectorXd m = a.rowwise().maxCoeff();
    return m.array() + (a.colwise() - m).array().exp().rowwise().sum().log();
}

Eigen::RowVectorXd floored_variance(const MatrixXd& x)
{
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return ((x.rowwise() - mean).array().square().colwise().mean()).cwiseMax(kVarianceFloor);
}

} // namespace

MatrixXd ProfileModel::weighted_log_density(const MatrixXd& x) const
{
    if (x.cols() != means.cols()) {
        throw DataError("profile model expects " + std::to_string(means.cols()) + "-dim vectors, got " +
                        std::to_string(x.cols()));
    }
    const Index k = weights.size();
    MatrixXd out(x.rows(), k);
    for (Index c = 0; c < k; ++c) {
        const Eigen::RowVectorXd precision = variances.row(c).cwiseInverse();
        const double log_norm = -0.5 * (x.cols() * kLog2Pi + variances.row(c).array().log().sum());
        const double log_w = weights[c] > 0.0 ? std::log(weights[c]) : -std::numeric_limits<double>::infinity();
        out.col(c) = (-0.5 * ((x.rowwise() - means.row(c)).array().square().rowwise() * precision.array())
                                 .rowwise()
                                 .sum())
                         .matrix()
                         .array() +
                     (log_norm + log_w);
    }
    return out;
}

double ProfileModel::mean_log_likelihood(const MatrixXd& x) const
{
    return log_sum_exp_rows(weighted_log_density(x)).mean();
}

void ProfileModel::save(std::ostream& os) const
{
    os << "profile_model 1\n";
    os << "K " << clusters() << '\n';
    os << "D " << dim() << '\n';
    const auto old_precision = os.precision(17);
    for (int c = 0; c < clusters(); ++c) {
        os << "cluster " << c << " weight " << weights[c] << '\n';
        os << "mean";
        for (int d = 0; d < dim(); ++d) {
            os << ' ' << means(c, d);
        }
        os << "\nvariance";
        for (int d = 0; d < dim(); ++d) {
            os << ' ' << variances(c, d);
        }
        os << '\n';
    }
    os.precision(old_precision);
}

ProfileModel ProfileModel::load(std::istream& is)
{
    auto fail = [](const std::string& what) -> ProfileModel { throw DataError("profile model: " + what); };
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "profile_model" || version != 1) {
        return fail("bad header");
    }
    int k = 0, d = 0;
    if (!(is >> tag >> k) || tag != "K" || k < 1 || !(is >> tag >> d) || tag != "D" || d < 1) {
        return fail("bad K/D lines");
    }
    ProfileModel m{VectorXd(k), MatrixXd(k, d), MatrixXd(k, d)};
    for (int c = 0; c < k; ++c) {
        int idx = -1;
        std::string wtag;
        if (!(is >> tag >> idx >> wtag >> m.weights[c]) || tag != "cluster" || idx != c || wtag != "weight") {
            return fail("bad cluster line " + std::to_string(c));
        }
        if (!(is >> tag) || tag != "mean") {
            return fail("missing mean line");
        }
        for (int j = 0; j < d; ++j) {
            is >> m.means(c, j);
        }
        if (!(is >> tag) || tag != "variance") {
            return fail("missing variance line");
        }
        for (int j = 0; j < d; ++j) {
            is >> m.variances(c, j);
        }
        if (!is) {
            return fail("truncated cluster " + std::to_string(c));
        }
    }
    if (std::abs(m.weights.sum() - 1.0) > 1e-9 || (m.weights.array() < 0.0).any()) {
        return fail("weights are not on the simplex");
    }
    if ((m.variances.array() < kVarianceFloor).any()) {
        return fail("variance below floor");
    }
    return m;
}

std::uint64_t ProfileModel::fingerprint() const
{
    std::ostringstream os;
    save(os);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : os.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

int count_distinct_rows(const MatrixXd& x)
{
    std::set<std::vector<double>> rows;
    for (Index i = 0; i < x.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(x.cols()));
        for (Index j = 0; j < x.cols(); ++j) {
            r[static_cast<std::size_t>(j)] = x(i, j);
        }
        rows.insert(std::move(r));
    }
    return static_cast<int>(rows.size());
}

MatrixXd e_step(const ProfileModel& model, const MatrixXd& x, double* mean_log_likelihood)
{
    const MatrixXd logp = model.weighted_log_density(x);
    const VectorXd lse = log_sum_exp_rows(logp);
    if (mean_log_likelihood) {
        *mean_log_likelihood = lse.mean();
    }
    MatrixXd r = (logp.colwise() - lse).array().exp();
    // Renormalize away the last ulp of log-sum-exp rounding.
    r.array().colwise() /= r.rowwise().sum().array();
    return r;
}

ProfileModel m_step(const MatrixXd& x, const MatrixXd& resp)
{
    if (resp.rows() != x.rows()) {
        throw DataError("m_step: responsibilities and data disagree on the number of rows");
    }
    const Index k = resp.cols();
    const Index d = x.cols();
    const double n = static_cast<double>(x.rows());
    const Eigen::RowVectorXd global_mean = x.colwise().mean();
    const Eigen::RowVectorXd global_var = floored_variance(x);

    ProfileModel m{VectorXd(k), MatrixXd(k, d), MatrixXd(k, d)};
    const VectorXd nk = resp.colwise().sum().transpose();
    for (Index c = 0; c < k; ++c) {
        if (!(nk[c] > 0.0)) {
            m.weights[c] = 0.0;
            m.means.row(c) = global_mean;
            m.variances.row(c) = global_var;
            continue;
        }
        m.weights[c] = nk[c] / n;
        m.means.row(c) = (resp.col(c).transpose() * x) / nk[c];
        const MatrixXd centered = x.rowwise() - m.means.row(c);
        m.variances.row(c) =
            ((resp.col(c).transpose() * centered.array().square().matrix()) / nk[c]).cwiseMax(kVarianceFloor);
    }
    m.weights /= m.weights.sum();
    return m;
}

namespace {

// k-means++ seeding of the means; variances start at the global variance.
ProfileModel initialize(const MatrixXd& x, int k, std::mt19937_64& rng)
{
    const Index n = x.rows();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ProfileModel m{VectorXd::Constant(k, 1.0 / k), MatrixXd(k, x.cols()), MatrixXd(k, x.cols())};
    const Eigen::RowVectorXd var = floored_variance(x);

    auto first = static_cast<Index>(unit(rng) * static_cast<double>(n));
    m.means.row(0) = x.row(std::min(first, n - 1));
    VectorXd dist2 = (x.rowwise() - m.means.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        const double target = unit(rng) * total;
        double acc = 0.0;
        Index pick = n - 1;
        for (Index i = 0; i < n; ++i) {
            acc += dist2[i];
            if (acc > target && dist2[i] > 0.0) {
                pick = i;
                break;
            }
        }
        while (dist2[pick] == 0.0 && pick > 0) {
            --pick;
        }
        m.means.row(c) = x.row(pick);
        dist2 = dist2.cwiseMin((x.rowwise() - m.means.row(c)).rowwise().squaredNorm());
    }
    for (int c = 0; c < k; ++c) {
        m.variances.row(c) = var;
    }
    return m;
}

int reseed_degenerate(ProfileModel& m, const MatrixXd& x)
{
    int reseeds = 0;
    for (int c = 0; c < m.clusters(); ++c) {
        if (m.weights[c] >= kDegenerateWeight) {
            continue;
        }
        const VectorXd point_ll = log_sum_exp_rows(m.weighted_log_density(x));
        Index worst = 0;
        point_ll.minCoeff(&worst);
        m.means.row(c) = x.row(worst);
        m.variances.row(c) = floored_variance(x);
        m.weights[c] = 1.0 / static_cast<double>(x.rows());
        m.weights /= m.weights.sum();
        std::clog << "profiles: re-seeded degenerate cluster " << c << " at observation " << worst << '\n';
        ++reseeds;
    }
    return reseeds;
}

} // namespace

GmmFit fit_gmm(const MatrixXd& x, const GmmOptions& options)
{
    if (x.rows() == 0) {
        throw DataError("fit_gmm: no observations");
    }
    if (options.clusters < 1) {
        throw DataError("fit_gmm: clusters must be >= 1");
    }
    const int distinct = count_distinct_rows(x);
    if (options.clusters > distinct) {
        throw DataError("fit_gmm: " + std::to_string(options.clusters) + " clusters requested but only " +
                        std::to_string(distinct) + " distinct vectors");
    }
    std::mt19937_64 rng(options.seed);
    GmmFit fit{initialize(x, options.clusters, rng), {}, 0, false};
    double previous = -std::numeric_limits<double>::infinity();
    for (int it = 0; it <= options.max_iters; ++it) {
        double ll = 0.0;
        const MatrixXd r = e_step(fit.model, x, &ll);
        fit.log_likelihood.push_back(ll);
        if (!std::isfinite(ll)) {
            throw NumericError("fit_gmm: non-finite log-likelihood at iteration " + std::to_string(it));
        }
        if (it > 0 && ll - previous < options.tol) {
            fit.converged = true;
            break;
        }
        if (it == options.max_iters) {
            break;
        }
        previous = ll;
        fit.model = m_step(x, r);
        fit.reseeds += reseed_degenerate(fit.model, x);
    }
    return fit;
}

int assign_profile(const ProfileModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x)
{
    const MatrixXd logp = model.weighted_log_density(MatrixXd(x));
    int best = 0;
    for (int c = 1; c < model.clusters(); ++c) {
        if (logp(0, c) > logp(0, best)) {
            best = c;
        }
    }
    return best;
}

ProfileFeatures aggregate_features(const MatrixXd& encoded, const ProfileModel& model)
{
    const int k = model.clusters();
    ProfileFeatures f{VectorXd::Zero(static_cast<Index>(k) * kSlotSize), encoded.rows() == 0};
    if (f.empty) {
        return f;
    }
    if (encoded.cols() != kEncodedDim || model.dim() != kEncodedDim) {
        throw DataError("aggregate_features expects " + std::to_string(kEncodedDim) + "-dim encodings");
    }
    const MatrixXd logp = model.weighted_log_density(encoded);
    MatrixXd sums = MatrixXd::Zero(k, kEncodedDim);
    VectorXd counts = VectorXd::Zero(k);
    for (Index i = 0; i < encoded.rows(); ++i) {
        Index best = 0;
        for (Index c = 1; c < k; ++c) {
            if (logp(i, c) > logp(i, best)) {
                best = c;
            }
        }
        sums.row(best) += encoded.row(i);
        counts[best] += 1.0;
    }
    const double n = static_cast<double>(encoded.rows());
    for (int c = 0; c < k; ++c) {
        auto slot = f.values.segment(static_cast<Index>(c) * kSlotSize, kSlotSize);
        if (counts[c] > 0.0) {
            slot.head(kEncodedDim) = sums.row(c).transpose() / counts[c];
        } else {
            slot.head(kEncodedDim) = model.means.row(c).transpose();
        }
        slot[kEncodedDim] = counts[c] / n;
    }
    return f;
}

} // namespace symptomcast
