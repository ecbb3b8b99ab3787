#include "symptomcast/harness.hpp"

#include "symptomcast/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#ifndef SYMPTOMCAST_VERSION
#define SYMPTOMCAST_VERSION "0.1.0"
#endif

namespace symptomcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_pair(VecRef a, VecRef b, const char* what)
{
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    if (a.size() < 2) {
        throw std::invalid_argument(std::string(what) + " needs at least two values");
    }
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    if (denom == 0.0) {
        return kNaN;
    }
    return std::clamp((da * db).sum() / denom, -1.0, 1.0);
}

} // namespace

double r2_score(VecRef pred, VecRef target)
{
    require_pair(pred, target, "r2_score");
    const double ss_tot = (target.array() - target.mean()).square().sum();
    if (ss_tot == 0.0) {
        std::clog << "warning: r2_score on a constant target is undefined\n";
        return kNaN;
    }
    return 1.0 - (target - pred).squaredNorm() / ss_tot;
}

Eigen::VectorXd average_ranks(VecRef v)
{
    const Index n = v.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
    Eigen::VectorXd ranks(n);
    for (Index i = 0; i < n;) {
        Index j = i;
        while (j + 1 < n && v[order[static_cast<std::size_t>(j + 1)]] == v[order[static_cast<std::size_t>(i)]]) {
            ++j;
        }
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index k = i; k <= j; ++k) {
            ranks[order[static_cast<std::size_t>(k)]] = mean_rank;
        }
        i = j + 1;
    }
    return ranks;
}

double spearman_corr(VecRef pred, VecRef target)
{
    require_pair(pred, target, "spearman_corr");
    return pearson(average_ranks(pred), average_ranks(target));
}

double sem(const std::vector<double>& values)
{
    if (values.size() < 2) {
        return kNaN;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

Metrics score(const std::vector<PredictionGrid>& predictions, const std::vector<WindowSample>& samples)
{
    Metrics m;
    for (const auto& s : samples) {
        m.n_pixels += s.label_mask.count();
    }
    // Eigen-owned (aligned) buffers: reductions over a Map of arbitrary
    // alignment can round differently from run to run.
    Eigen::VectorXd pv(m.n_pixels), tv(m.n_pixels);
    Index n = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const WindowSample& s = samples[i];
        const TensorXd point = predictions[i].expected();
        for (Index k = 0; k < s.label.size(); ++k) {
            if (s.label_mask[k]) {
                pv[n] = point[k];
                tv[n] = s.label[k];
                ++n;
            }
        }
    }
    if (m.n_pixels < 2) {
        m.r2 = m.spearman = kNaN;
        return m;
    }
    m.r2 = r2_score(pv, tv);
    m.spearman = spearman_corr(pv, tv);
    return m;
}

Metrics evaluate(Network& net, const std::vector<WindowSample>& samples)
{
    std::vector<PredictionGrid> predictions;
    predictions.reserve(samples.size());
    for (const auto& s : samples) {
        predictions.push_back(predict(net, s));
    }
    return score(predictions, samples);
}

// -- splits -------------------------------------------------------------------

void check_no_leakage(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& train,
                      const std::vector<std::size_t>& eval)
{
    if (train.empty() || eval.empty()) {
        return;
    }
    int latest_train = std::numeric_limits<int>::min();
    for (std::size_t i : train) {
        latest_train = std::max(latest_train, windows[i].target_date);
        for (int d : windows[i].input_dates) {
            latest_train = std::max(latest_train, d);
        }
    }
    int earliest_eval = std::numeric_limits<int>::max();
    for (std::size_t i : eval) {
        earliest_eval = std::min(earliest_eval, windows[i].target_date);
    }
    if (latest_train >= earliest_eval) {
        throw std::logic_error("temporal leakage: training uses day " + std::to_string(latest_train) +
                               " but evaluation starts at day " + std::to_string(earliest_eval));
    }
}

SplitPlan make_split_plan(const std::vector<WindowSample>& windows, int test_days, int folds)
{
    if (test_days < 1 || folds < 1) {
        throw ConfigError("split needs test_days >= 1 and folds >= 1");
    }
    std::set<int> targets;
    for (const auto& w : windows) {
        targets.insert(w.target_date);
    }
    const std::vector<int> days(targets.begin(), targets.end());
    const std::size_t n_test = static_cast<std::size_t>(test_days);
    const std::size_t n_blocks = static_cast<std::size_t>(folds) + 1;
    if (days.size() < n_test + n_blocks) {
        throw DataError("need at least " + std::to_string(n_test + n_blocks) + " distinct target days for " +
                        std::to_string(test_days) + " test days and " + std::to_string(folds) + " folds, have " +
                        std::to_string(days.size()));
    }
    SplitPlan plan;
    plan.test_days.assign(days.end() - static_cast<std::ptrdiff_t>(n_test), days.end());
    const int first_test = plan.test_days.front();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        (windows[i].target_date >= first_test ? plan.test : plan.pool).push_back(i);
    }

    const std::size_t n_pool_days = days.size() - n_test;
    std::map<int, std::size_t> block_of;
    for (std::size_t k = 0; k < n_pool_days; ++k) {
        block_of[days[k]] = k * n_blocks / n_pool_days;
    }
    std::vector<std::vector<std::size_t>> blocks(n_blocks);
    for (std::size_t i : plan.pool) {
        blocks[block_of.at(windows[i].target_date)].push_back(i);
    }
    for (std::size_t f = 0; f + 1 < n_blocks; ++f) {
        Fold fold;
        fold.validation = blocks[f + 1];
        std::set<int> val_days;
        for (std::size_t i : fold.validation) {
            val_days.insert(windows[i].target_date);
        }
        for (std::size_t b = 0; b <= f; ++b) {
            for (std::size_t i : blocks[b]) {
                const auto& in = windows[i].input_dates;
                const bool touches = std::any_of(in.begin(), in.end(), [&](int d) { return val_days.count(d) > 0; });
                if (!touches) {
                    fold.train.push_back(i);
                }
            }
        }
        check_no_leakage(windows, fold.train, fold.validation);
        plan.folds.push_back(std::move(fold));
    }
    check_no_leakage(windows, plan.pool, plan.test);
    return plan;
}

std::vector<int> input_days(const std::vector<WindowSample>& windows, const std::vector<std::size_t>& which)
{
    std::set<int> days;
    for (std::size_t i : which) {
        days.insert(windows[i].input_dates.begin(), windows[i].input_dates.end());
    }
    return {days.begin(), days.end()};
}

std::vector<WindowSample> shuffle_labels_in_time(std::vector<WindowSample> windows, std::uint64_t seed)
{
    std::vector<std::size_t> perm(windows.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<TensorXd> labels;
    std::vector<Mask> masks;
    for (const auto& w : windows) {
        labels.push_back(w.label);
        masks.push_back(w.label_mask);
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        windows[i].label = labels[perm[i]];
        windows[i].label_mask = masks[perm[i]];
    }
    return windows;
}

// -- cross-validation ---------------------------------------------------------

namespace {

struct TrainedRun {
    Metrics metrics;
    std::vector<double> loss_history;
};

TrainedRun train_and_score(const GriddedDataset& data, const std::vector<WindowSample>& windows,
                           const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& eval_idx,
                           const ModelConfig& config)
{
    const ChannelNorm norm = ChannelNorm::fit(data, input_days(windows, train_idx));
    std::vector<WindowSample> train_set, eval_set;
    for (std::size_t i : train_idx) {
        train_set.push_back(windows[i]);
        norm.apply(train_set.back());
    }
    for (std::size_t i : eval_idx) {
        eval_set.push_back(windows[i]);
        norm.apply(eval_set.back());
    }
    Network net(config);
    TrainedRun run;
    run.loss_history = train(net, train_set).loss_history;
    run.metrics = evaluate(net, eval_set);
    return run;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

double mean_of(const std::vector<double>& v)
{
    return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

CvResult cross_validate(const GriddedDataset& data, const std::vector<WindowSample>& windows, const SplitPlan& plan,
                        const ModelConfig& config, int threads)
{
    CvResult result;
    result.folds.resize(plan.folds.size());
    parallel_for(plan.folds.size(), threads, [&](std::size_t f) {
        const Fold& fold = plan.folds[f];
        FoldResult& out = result.folds[f];
        out.fold = static_cast<int>(f);
        out.n_train = fold.train.size();
        out.n_validation = fold.validation.size();
        const bool observed = std::any_of(fold.validation.begin(), fold.validation.end(),
                                          [&](std::size_t i) { return windows[i].label_mask.any(); });
        if (fold.train.empty() || !observed) {
            out.skipped = true;
            return;
        }
        TrainedRun run = train_and_score(data, windows, fold.train, fold.validation, config);
        out.metrics = run.metrics;
        out.loss_history = std::move(run.loss_history);
        out.skipped = !std::isfinite(run.metrics.r2);
    });
    std::vector<double> r2, sc;
    for (const auto& f : result.folds) {
        if (f.skipped) {
            std::clog << "warning: fold " << f.fold << " skipped (no usable validation labels)\n";
            continue;
        }
        r2.push_back(f.metrics.r2);
        sc.push_back(f.metrics.spearman);
    }
    result.mean_r2 = mean_of(r2);
    result.sem_r2 = sem(r2);
    result.mean_spearman = mean_of(sc);
    result.sem_spearman = sem(sc);
    return result;
}

Metrics test_score(const GriddedDataset& data, const std::vector<WindowSample>& windows, const SplitPlan& plan,
                   const ModelConfig& config)
{
    return train_and_score(data, windows, plan.pool, plan.test, config).metrics;
}

// -- experiments --------------------------------------------------------------

int first_test_day(const std::vector<SurveyRecord>& records, const ExperimentConfig& config)
{
    std::set<int> days;
    for (const auto& r : records) {
        days.insert(r.date);
    }
    if (days.size() <= static_cast<std::size_t>(config.test_days)) {
        throw DataError("not enough days for a " + std::to_string(config.test_days) + "-day test period");
    }
    auto it = days.end();
    std::advance(it, -config.test_days);
    return *it;
}

ProfileModel fit_profiles_before_test(const std::vector<SurveyRecord>& records, const ExperimentConfig& config,
                                      int clusters)
{
    const int cutoff = first_test_day(records, config);
    std::vector<SurveyRecord> early;
    for (const auto& r : records) {
        if (r.date < cutoff) {
            early.push_back(r);
        }
    }
    GmmOptions options;
    options.clusters = clusters;
    options.seed = config.profile_seed;
    options.max_iters = config.gmm_max_iters;
    options.tol = config.gmm_tol;
    return fit_gmm(encode_records(early), options).model;
}

namespace {

struct Prepared {
    GriddedDataset data;
    std::vector<WindowSample> windows;
};

Prepared prepare(const std::vector<SurveyRecord>& records, const GridSpec& grid, const ProfileModel& profiles,
                 const ModelConfig& model, Interpolation interpolation)
{
    Prepared p;
    p.data = build_dataset(records, grid, profiles, interpolation);
    p.windows = build_windows(p.data, model.input_days, model.horizon);
    return p;
}

struct RunSpec {
    std::string name;
    const Prepared* prepared;
    ModelConfig model;
};

AblationRow run_spec(const RunSpec& spec, const SplitPlan& plan, const ExperimentConfig& config, std::ostream* log)
{
    const std::size_t n_folds = plan.folds.size();
    std::vector<std::vector<double>> r2(n_folds), sc(n_folds);
    std::vector<double> test_r2, test_sc;
    for (std::uint64_t seed : config.seeds) {
        ModelConfig m = spec.model;
        m.seed = seed;
        const CvResult cv = cross_validate(spec.prepared->data, spec.prepared->windows, plan, m, config.threads);
        for (std::size_t f = 0; f < n_folds; ++f) {
            if (!cv.folds[f].skipped) {
                r2[f].push_back(cv.folds[f].metrics.r2);
                sc[f].push_back(cv.folds[f].metrics.spearman);
            }
        }
        if (log) {
            *log << spec.name << " seed " << seed << " cv r2 " << cv.mean_r2 << " sc " << cv.mean_spearman << '\n';
        }
        if (config.evaluate_test) {
            const Metrics t = test_score(spec.prepared->data, spec.prepared->windows, plan, m);
            test_r2.push_back(t.r2);
            test_sc.push_back(t.spearman);
            if (log) {
                *log << spec.name << " seed " << seed << " test r2 " << t.r2 << " sc " << t.spearman << '\n';
            }
        }
    }
    std::vector<double> fold_r2, fold_sc;
    for (std::size_t f = 0; f < n_folds; ++f) {
        if (!r2[f].empty()) {
            fold_r2.push_back(mean_of(r2[f]));
            fold_sc.push_back(mean_of(sc[f]));
        }
    }
    AblationRow row;
    row.name = spec.name;
    row.mean_r2 = mean_of(fold_r2);
    row.sem_r2 = sem(fold_r2);
    row.mean_spearman = mean_of(fold_sc);
    row.sem_spearman = sem(fold_sc);
    row.test_r2 = config.evaluate_test ? mean_of(test_r2) : kNaN;
    row.test_spearman = config.evaluate_test ? mean_of(test_sc) : kNaN;
    row.folds = static_cast<int>(fold_r2.size());
    return row;
}

ModelConfig shaped(const ExperimentConfig& config, ModelMode mode, Index channels, Index rows, Index cols,
                   bool patched)
{
    ModelConfig m = config.model;
    m.mode = mode;
    m.input_channels = channels;
    m.grid_rows = rows;
    m.grid_cols = cols;
    m.patch.reset();
    if (patched) {
        PatchConfig p = config.patch;
        p.rows = std::min(p.rows, rows);
        p.cols = std::min(p.cols, cols);
        if (p.rows < rows || p.cols < cols) {
            m.patch = p;
        }
    }
    return m;
}

} // namespace

std::vector<AblationRow> ablation_run(const std::vector<SurveyRecord>& records, const ExperimentConfig& config,
                                      std::ostream* log)
{
    const GridSpec grid{config.grid_rows, config.grid_cols, config.bounds};
    const ProfileModel profiles = fit_profiles_before_test(records, config, config.clusters);
    const ProfileModel single = fit_profiles_before_test(records, config, 1);
    const Index channels = static_cast<Index>(config.clusters) * kSlotSize;

    const Prepared full = prepare(records, grid, profiles, config.model, config.interpolation);
    const Prepared raw = prepare(records, grid, single, config.model, config.interpolation);
    const SplitPlan plan = make_split_plan(full.windows, config.test_days, config.folds);
    if (raw.windows.size() != full.windows.size()) {
        throw std::logic_error("raw and profile datasets produced different windows");
    }

    const Index H = grid.rows, W = grid.cols;
    const std::vector<RunSpec> specs{
        {"baseline_fc", &full, shaped(config, ModelMode::baseline_fc, channels, H, W, false)},
        {"raw_features", &raw, shaped(config, ModelMode::raw_features, kSlotSize, H, W, true)},
        {"full_images", &full, shaped(config, ModelMode::full, channels, H, W, false)},
        {"full_patched", &full, shaped(config, ModelMode::full, channels, H, W, true)},
    };
    std::vector<AblationRow> rows;
    for (const auto& spec : specs) {
        rows.push_back(run_spec(spec, plan, config, log));
    }
    if (config.include_null) {
        Prepared shuffled{full.data, shuffle_labels_in_time(full.windows, config.null_seed)};
        rows.push_back(run_spec({"shuffled_null", &shuffled, specs.back().model}, plan, config, log));
    }
    return rows;
}

namespace {

std::string csv_num(double v)
{
    if (!std::isfinite(v)) {
        return "nan";
    }
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

} // namespace

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows)
{
    os << "model,mean_r2,sem_r2,mean_spearman,sem_spearman,test_r2,test_spearman,folds\n";
    for (const auto& r : rows) {
        os << r.name << ',' << csv_num(r.mean_r2) << ',' << csv_num(r.sem_r2) << ',' << csv_num(r.mean_spearman)
           << ',' << csv_num(r.sem_spearman) << ',' << csv_num(r.test_r2) << ',' << csv_num(r.test_spearman) << ','
           << r.folds << '\n';
    }
}

std::vector<SweepRow> resolution_sweep(const std::vector<SurveyRecord>& records,
                                       const std::vector<Resolution>& resolutions, const ExperimentConfig& config,
                                       std::ostream* log)
{
    if (resolutions.empty()) {
        throw ConfigError("resolution sweep needs at least one resolution");
    }
    const ProfileModel profiles = fit_profiles_before_test(records, config, config.clusters);
    const Index channels = static_cast<Index>(config.clusters) * kSlotSize;
    std::vector<SweepRow> rows;
    for (const Resolution& res : resolutions) {
        const GridSpec grid{res.rows, res.cols, config.bounds};
        const ModelConfig model = shaped(config, ModelMode::full, channels, res.rows, res.cols, true);
        const Prepared p = prepare(records, grid, profiles, model, config.interpolation);
        const SplitPlan plan = make_split_plan(p.windows, config.test_days, config.folds);
        std::vector<std::vector<double>> per_fold(plan.folds.size());
        for (std::uint64_t seed : config.seeds) {
            ModelConfig m = model;
            m.seed = seed;
            const CvResult cv = cross_validate(p.data, p.windows, plan, m, config.threads);
            for (std::size_t f = 0; f < cv.folds.size(); ++f) {
                if (!cv.folds[f].skipped) {
                    per_fold[f].push_back(cv.folds[f].metrics.r2);
                }
            }
        }
        std::vector<double> fold_r2;
        for (const auto& v : per_fold) {
            if (!v.empty()) {
                fold_r2.push_back(mean_of(v));
            }
        }
        SweepRow row{res.rows, res.cols, mean_of(fold_r2), sem(fold_r2), static_cast<int>(fold_r2.size())};
        if (log) {
            *log << "resolution " << res.rows << "x" << res.cols << " r2 " << row.mean_r2 << " sem " << row.sem_r2
                 << '\n';
        }
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows)
{
    os << "rows,cols,bins,mean_r2,sem_r2,folds\n";
    for (const auto& r : rows) {
        os << r.rows << ',' << r.cols << ',' << r.bins() << ',' << csv_num(r.mean_r2) << ',' << csv_num(r.sem_r2)
           << ',' << r.folds << '\n';
    }
}

std::string version_string() { return "symptomcast " SYMPTOMCAST_VERSION; }

void write_manifest(std::ostream& os, const std::string& command, const std::string& config_echo,
                    const std::vector<std::uint64_t>& seeds)
{
    os << "# run manifest\n";
    os << "version=" << version_string() << '\n';
    os << "command=" << command << '\n';
    os << "seeds=";
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        os << (i ? "," : "") << seeds[i];
    }
    os << "\n# config\n" << config_echo;
    if (!config_echo.empty() && config_echo.back() != '\n') {
        os << '\n';
    }
}

} // namespace symptomcast
