#ifndef SYMPTOMCAST_PROFILES_HPP
#define SYMPTOMCAST_PROFILES_HPP

#include "symptomcast/survey.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace symptomcast {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kDegenerateWeight = 1e-8;
// Per-cluster feature slot: mean encoding plus member fraction.
inline constexpr int kSlotSize = kEncodedDim + 1;

// Diagonal-covariance Gaussian mixture over encoded questionnaires.
struct ProfileModel {
    Eigen::VectorXd weights;   // K, on the simplex
    Eigen::MatrixXd means;     // K x D
    Eigen::MatrixXd variances; // K x D, >= kVarianceFloor

    int clusters() const { return static_cast<int>(weights.size()); }
    int dim() const { return static_cast<int>(means.cols()); }

    // N x K matrix of log(w_k N(x_n | mu_k, diag v_k)).
    Eigen::MatrixXd weighted_log_density(const Eigen::MatrixXd& x) const;
    // Mean over rows of log sum_k w_k N(x_n | ...).
    double mean_log_likelihood(const Eigen::MatrixXd& x) const;

    void save(std::ostream& os) const;
    static ProfileModel load(std::istream& is);
    // FNV-1a over the serialized text; identifies a model inside checkpoints.
    std::uint64_t fingerprint() const;
};

struct GmmOptions {
    int clusters = 4;
    int max_iters = 200;
    // Stops once the mean per-point log-likelihood improves by less than tol.
    double tol = 1e-7;
    std::uint64_t seed = 0;
};

struct GmmFit {
    ProfileModel model;
    std::vector<double> log_likelihood; // mean per-point value at each E-step
    int reseeds = 0;
    bool converged = false;
};

// Rows of `x` are observations. Throws DataError for empty input or when
// clusters exceeds the number of distinct rows.
GmmFit fit_gmm(const Eigen::MatrixXd& x, const GmmOptions& options = {});

// Posterior responsibilities (N x K, rows on the simplex), log-sum-exp
// stabilized. Optionally reports the mean log-likelihood of the model.
Eigen::MatrixXd e_step(const ProfileModel& model, const Eigen::MatrixXd& x, double* mean_log_likelihood = nullptr);

// Weighted mean / variance updates; variances floored at kVarianceFloor.
// Components with zero total responsibility get weight 0 and the global mean.
ProfileModel m_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& responsibilities);

// Index of the maximum-posterior cluster, ties to the lowest index.
int assign_profile(const ProfileModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

// K x 16 values laid out cluster by cluster as [mean encoding (15), fraction].
struct ProfileFeatures {
    Eigen::VectorXd values;
    bool empty = true;
};

// `encoded` holds one encoded record per row (possibly zero rows).
ProfileFeatures aggregate_features(const Eigen::MatrixXd& encoded, const ProfileModel& model);

int count_distinct_rows(const Eigen::MatrixXd& x);

} // namespace symptomcast

#endif
