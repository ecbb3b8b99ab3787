#ifndef SYMPTOMCAST_HARNESS_HPP
#define SYMPTOMCAST_HARNESS_HPP

#include "symptomcast/gridder.hpp"
#include "symptomcast/models.hpp"
#include "symptomcast/profiles.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace symptomcast {

using VecRef = Eigen::Ref<const Eigen::VectorXd>;

// 1 - SS_res/SS_tot. A constant target gives NaN and a warning on std::clog.
double r2_score(VecRef pred, VecRef target);
// Pearson correlation of average ranks (ties share the mean rank).
double spearman_corr(VecRef pred, VecRef target);
Eigen::VectorXd average_ranks(VecRef v);
// Sample standard deviation over sqrt(n); NaN for fewer than two values.
double sem(const std::vector<double>& values);

struct Metrics {
    double r2 = 0.0;
    double spearman = 0.0;
    Index n_pixels = 0;
};

// Pools the observed pixels of every sample. n_pixels == 0 when nothing is observed.
Metrics evaluate(Network& net, const std::vector<WindowSample>& samples);
Metrics score(const std::vector<PredictionGrid>& predictions, const std::vector<WindowSample>& samples);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

// Indices refer to the windows vector the plan was built from.
struct SplitPlan {
    std::vector<int> test_days;
    std::vector<std::size_t> test;
    std::vector<std::size_t> pool; // everything before the test period
    std::vector<Fold> folds;
};

// Test set = windows whose target is among the last `test_days` distinct
// target days. The remaining windows are cut into folds+1 contiguous blocks
// of target days; fold i trains on blocks 0..i and validates on block i+1.
// Violations of the no-leakage rule throw std::logic_error.
SplitPlan make_split_plan(const std::vector<WindowSample>& windows, int test_days = 14, int folds = 5);
void check_no_leakage(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& train,
                      const std::vector<std::size_t>& eval);

struct FoldResult {
    int fold = 0;
    Metrics metrics;
    std::size_t n_train = 0;
    std::size_t n_validation = 0;
    bool skipped = false;
    std::vector<double> loss_history;
};

struct CvResult {
    std::vector<FoldResult> folds;
    double mean_r2 = 0.0;
    double sem_r2 = 0.0;
    double mean_spearman = 0.0;
    double sem_spearman = 0.0;
};

// Trains a fresh network per fold (normalization fitted on that fold's
// training input days) and scores it on the validation block. Folds run on
// up to `threads` threads; results do not depend on the thread count.
CvResult cross_validate(const GriddedDataset& data, const std::vector<WindowSample>& windows, const SplitPlan& plan,
                        const ModelConfig& config, int threads = 1);

// Trains on the whole pool and scores on the test windows.
Metrics test_score(const GriddedDataset& data, const std::vector<WindowSample>& windows, const SplitPlan& plan,
                   const ModelConfig& config);

// Days appearing as inputs of the given windows.
std::vector<int> input_days(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& which);

// Permutes label grids across windows, destroying their temporal alignment.
std::vector<WindowSample> shuffle_labels_in_time(std::vector<WindowSample> windows, std::uint64_t seed);

// -- experiments --------------------------------------------------------------

struct ExperimentConfig {
    Bounds2d bounds{};
    Index grid_rows = 20;
    Index grid_cols = 20;
    int clusters = 4;
    std::uint64_t profile_seed = 1;
    int gmm_max_iters = 200;
    double gmm_tol = 1e-7;
    Interpolation interpolation = Interpolation::nearest;
    int test_days = 14;
    int folds = 5;
    ModelConfig model; // mode, channels and grid are overwritten per run
    PatchConfig patch{};
    std::vector<std::uint64_t> seeds{1};
    bool evaluate_test = true;
    // Adds a row for the full patched model trained on labels permuted in time.
    bool include_null = false;
    std::uint64_t null_seed = 1;
    int threads = 1;
};

// Fits the profile mixture on records dated before the test period.
ProfileModel fit_profiles_before_test(const std::vector<SurveyRecord>& records, const ExperimentConfig& config,
                                      int clusters);
int first_test_day(const std::vector<SurveyRecord>& records, const ExperimentConfig& config);

struct AblationRow {
    std::string name;
    double mean_r2 = 0.0;
    double sem_r2 = 0.0;
    double mean_spearman = 0.0;
    double sem_spearman = 0.0;
    double test_r2 = 0.0;
    double test_spearman = 0.0;
    int folds = 0;
};

std::vector<AblationRow> ablation_run(const std::vector<SurveyRecord>& records, const ExperimentConfig& config,
                                      std::ostream* log = nullptr);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

struct SweepRow {
    Index rows = 0;
    Index cols = 0;
    double mean_r2 = 0.0;
    double sem_r2 = 0.0;
    int folds = 0;

    Index bins() const { return rows * cols; }
};

// Re-bins, re-rasterizes and re-trains the full model per resolution.
std::vector<SweepRow> resolution_sweep(const std::vector<SurveyRecord>& records,
                                       const std::vector<Resolution>& resolutions, const ExperimentConfig& config,
                                       std::ostream* log = nullptr);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

// Config echo, seeds and version, written next to every report.
void write_manifest(std::ostream& os, const std::string& command, const std::string& config_echo,
                    const std::vector<std::uint64_t>& seeds);
std::string version_string();

} // namespace symptomcast

#endif
