#include "cli.hpp"

#include "symptomcast/errors.hpp"
#include "symptomcast/harness.hpp"
#include "symptomcast/run_config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace symptomcast::cli {

namespace {

// Open failures on inputs are data errors; a missing config file is reported
// by load_run_config as a config error.
std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return in;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    return out;
}

void close_out(std::ofstream& out, const std::string& path)
{
    out.close();
    if (!out) {
        throw DataError("failed writing " + path);
    }
}

RunConfig config_or_default(const std::string& path)
{
    if (path.empty()) {
        RunConfig rc;
        rc.finalize();
        return rc;
    }
    return load_run_config(path);
}

int env_threads()
{
    const char* v = std::getenv("SYMPTOMCAST_THREADS");
    if (!v || !*v) {
        return 1;
    }
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) {
        throw ConfigError(std::string("SYMPTOMCAST_THREADS must be a positive integer, got '") + v + "'");
    }
    return static_cast<int>(std::min(n, 256L));
}

std::vector<SurveyRecord> load_survey(const std::string& path, const Bounds2d& bounds, std::ostream& err)
{
    std::ifstream in = open_in(path);
    CsvOptions options;
    options.bounds = &bounds;
    ParsedSurvey parsed = parse_survey_csv(in, options);
    for (const RowError& e : parsed.errors) {
        err << "warning: " << path << " row " << e.row << ": " << e.reason << '\n';
    }
    if (parsed.records.empty()) {
        throw DataError(path + " has no valid records");
    }
    return std::move(parsed.records);
}

ProfileModel load_profiles(const std::string& path)
{
    std::ifstream in = open_in(path);
    try {
        return ProfileModel::load(in);
    } catch (const ConfigError& e) {
        throw DataError(path + ": " + e.what());
    }
}

LoadedCheckpoint load_ckpt(const std::string& path)
{
    std::ifstream in = open_in(path);
    return load_checkpoint(in);
}

void write_manifest_file(const std::string& report, const std::string& command, const RunConfig& rc)
{
    const std::string path = report + ".manifest";
    std::ofstream out = open_out(path);
    write_manifest(out, command, rc.echo(), rc.experiment.seeds);
    close_out(out, path);
}

void write_manifest_file(const std::string& report, const std::string& command, const std::string& echo,
                         const std::vector<std::uint64_t>& seeds)
{
    const std::string path = report + ".manifest";
    std::ofstream out = open_out(path);
    write_manifest(out, command, echo, seeds);
    close_out(out, path);
}

std::string model_echo(const ModelConfig& m)
{
    std::ostringstream os;
    m.write(os);
    return os.str();
}

// Accepts YYYY-MM-DD (relative to the CSV epoch) or a plain day index.
int parse_day(const std::string& text)
{
    int day = 0;
    if (parse_date(text, CsvOptions{}.epoch, day)) {
        return day;
    }
    KeyValue kv{"date", text, 0};
    try {
        return static_cast<int>(to_int(kv));
    } catch (const ConfigError&) {
        throw ConfigError("--date must be YYYY-MM-DD or a day index, got '" + text + "'");
    }
}

std::vector<Resolution> parse_resolutions(const std::string& text)
{
    std::vector<Resolution> out;
    std::istringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        Resolution r;
        char x = 0;
        std::istringstream is(item);
        if (!(is >> r.rows >> x >> r.cols) || x != 'x' || !is.eof() || r.rows < 1 || r.cols < 1) {
            throw ConfigError("resolution '" + item + "' is not ROWSxCOLS");
        }
        out.push_back(r);
    }
    if (out.size() < 3) {
        throw ConfigError("a sweep needs at least 3 resolutions");
    }
    return out;
}

// -- commands -----------------------------------------------------------------

void cmd_generate(const std::string& config_path, const std::string& out_path, const std::string& lambda_path,
                  std::ostream& out)
{
    const RunConfig rc = config_or_default(config_path);
    const SyntheticSurvey s = generate_synthetic(rc.synthetic);
    {
        std::ofstream csv = open_out(out_path);
        write_survey_csv(csv, s.records);
        close_out(csv, out_path);
    }
    // ground truth at cell centres, one time slice per day
    const GridSpec grid{rc.experiment.grid_rows, rc.experiment.grid_cols, rc.synthetic.bounds};
    TensorXd lambda = TensorXd::zeros({1, rc.synthetic.days, grid.rows, grid.cols});
    for (int d = 0; d < rc.synthetic.days; ++d) {
        for (Index r = 0; r < grid.rows; ++r) {
            for (Index c = 0; c < grid.cols; ++c) {
                const auto [x, y] = grid.cell_center(r, c);
                lambda.at(0, d, r, c) = s.intensity(x, y, d);
            }
        }
    }
    std::ofstream g = open_out(lambda_path);
    write_grid(g, lambda);
    close_out(g, lambda_path);
    out << "records=" << s.records.size() << " days=" << rc.synthetic.days << '\n';
}

void cmd_fit_profiles(const std::string& data, int k, std::uint64_t seed, const std::string& config_path,
                      const std::string& out_path, std::ostream& out, std::ostream& err)
{
    RunConfig rc = config_or_default(config_path);
    rc.experiment.profile_seed = seed;
    const auto records = load_survey(data, rc.synthetic.bounds, err);
    const ProfileModel model = fit_profiles_before_test(records, rc.experiment, k);
    std::ofstream os = open_out(out_path);
    model.save(os);
    close_out(os, out_path);
    out << "clusters=" << model.clusters() << " fitted_before_day=" << first_test_day(records, rc.experiment) << '\n';
}

void cmd_train(const std::string& data, const std::string& profiles_path, const std::string& config_path,
               const std::string& out_path, const std::string& loss_path, std::ostream& out, std::ostream& err)
{
    RunConfig rc = config_or_default(config_path);
    const ProfileModel profiles = load_profiles(profiles_path);
    if (rc.model().mode == ModelMode::raw_features && profiles.clusters() != 1) {
        throw ConfigError("raw_features mode needs a single-cluster profile model");
    }
    if (rc.model().mode != ModelMode::raw_features && profiles.clusters() != rc.experiment.clusters) {
        throw ConfigError("profile model has " + std::to_string(profiles.clusters()) + " clusters, config says " +
                          std::to_string(rc.experiment.clusters));
    }
    const ExperimentConfig& e = rc.experiment;
    const auto records = load_survey(data, e.bounds, err);
    const GriddedDataset dataset =
        build_dataset(records, GridSpec{e.grid_rows, e.grid_cols, e.bounds}, profiles, e.interpolation);
    const auto windows = build_windows(dataset, rc.model().input_days, rc.model().horizon);
    const SplitPlan plan = make_split_plan(windows, e.test_days, 1);

    const ChannelNorm norm = ChannelNorm::fit(dataset, input_days(windows, plan.pool));
    std::vector<WindowSample> train_set;
    for (std::size_t i : plan.pool) {
        train_set.push_back(windows[i]);
        norm.apply(train_set.back());
    }
    Network net(rc.model());
    const TrainResult result = train(net, train_set);

    {
        std::ofstream ck = open_out(out_path);
        save_checkpoint(ck, net, CheckpointMeta{e.bounds, norm, profiles, e.interpolation});
        close_out(ck, out_path);
    }
    {
        std::ofstream lc = open_out(loss_path);
        lc << "epoch,loss\n";
        for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
            lc << i + 1 << ',' << format_double(result.loss_history[i]) << '\n';
        }
        close_out(lc, loss_path);
    }
    write_manifest_file(out_path, "train", rc);
    out << "windows=" << train_set.size() << " parameters=" << net.parameter_count();
    if (!result.loss_history.empty()) {
        out << " final_loss=" << result.loss_history.back();
    }
    out << '\n';
}

struct Inference {
    LoadedCheckpoint ckpt;
    GriddedDataset dataset;
};

Inference prepare_inference(const std::string& checkpoint, const std::string& data, std::ostream& err)
{
    LoadedCheckpoint ck = load_ckpt(checkpoint);
    const CheckpointMeta& meta = ck.meta;
    const ModelConfig& m = ck.network.config();
    const auto records = load_survey(data, meta.bounds, err);
    GriddedDataset dataset =
        build_dataset(records, GridSpec{m.grid_rows, m.grid_cols, meta.bounds}, meta.profiles, meta.interpolation);
    return {std::move(ck), std::move(dataset)};
}

void cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& report, int test_days,
              std::ostream& out, std::ostream& err)
{
    Inference inf = prepare_inference(checkpoint, data, err);
    const ModelConfig& m = inf.ckpt.network.config();
    const auto windows = build_windows(inf.dataset, m.input_days, m.horizon);
    const SplitPlan plan = make_split_plan(windows, test_days, 1);
    std::vector<WindowSample> test;
    for (std::size_t i : plan.test) {
        test.push_back(windows[i]);
        inf.ckpt.meta.norm.apply(test.back());
    }
    const Metrics metrics = evaluate(inf.ckpt.network, test);
    std::ofstream os = open_out(report);
    os << "split,windows,n_pixels,r2,spearman\n"
       << "test," << test.size() << ',' << metrics.n_pixels << ',' << format_double(metrics.r2) << ','
       << format_double(metrics.spearman) << '\n';
    close_out(os, report);
    write_manifest_file(report, "eval test_days=" + std::to_string(test_days), model_echo(m), {m.seed});
    out << "r2=" << metrics.r2 << " spearman=" << metrics.spearman << " pixels=" << metrics.n_pixels << '\n';
}

void cmd_ablate(const std::string& data, const std::string& config_path, const std::string& report,
                std::ostream& out, std::ostream& err)
{
    RunConfig rc = config_or_default(config_path);
    rc.experiment.threads = env_threads();
    const auto records = load_survey(data, rc.experiment.bounds, err);
    const auto rows = ablation_run(records, rc.experiment, &out);
    std::ofstream os = open_out(report);
    write_ablation_csv(os, rows);
    close_out(os, report);
    write_manifest_file(report, "ablate", rc);
    write_ablation_csv(out, rows);
}

void cmd_sweep(const std::string& data, const std::string& resolutions, const std::string& config_path,
               const std::string& report, std::ostream& out, std::ostream& err)
{
    RunConfig rc = config_or_default(config_path);
    rc.experiment.threads = env_threads();
    const auto res = parse_resolutions(resolutions);
    const auto records = load_survey(data, rc.experiment.bounds, err);
    const auto rows = resolution_sweep(records, res, rc.experiment, &out);
    std::ofstream os = open_out(report);
    write_sweep_csv(os, rows);
    close_out(os, report);
    write_manifest_file(report, "sweep resolutions=" + resolutions, rc);
    write_sweep_csv(out, rows);
}

void cmd_predict(const std::string& checkpoint, const std::string& data, const std::string& date,
                 const std::string& out_path, std::ostream& out, std::ostream& err)
{
    const int target = parse_day(date);
    Inference inf = prepare_inference(checkpoint, data, err);
    const ModelConfig& m = inf.ckpt.network.config();
    WindowSample s = forecast_window(inf.dataset, target, m.input_days, m.horizon);
    inf.ckpt.meta.norm.apply(s);
    const PredictionGrid p = predict(inf.ckpt.network, s);
    const Index H = p.mu.dim(0), W = p.mu.dim(1);
    TensorXd grid = TensorXd::zeros({2, 1, H, W});
    grid.matrix(2, H * W).row(0) = p.mu.vec().transpose();
    grid.matrix(2, H * W).row(1) = p.sigma.vec().transpose();
    std::ofstream os = open_out(out_path);
    write_grid(os, grid);
    close_out(os, out_path);
    out << "target_day=" << target << " mean_expected_sra=" << p.expected().vec().mean() << '\n';
}

// Plain P2 graymap; the top image row is the northernmost grid row.
void cmd_render(const std::string& grid_path, const std::string& out_path, Index channel, Index time,
                std::ostream& out)
{
    std::ifstream in = open_in(grid_path);
    const TensorXd g = read_grid(in);
    if (channel < 0 || channel >= g.dim(0) || time < 0 || time >= g.dim(1)) {
        throw ConfigError("grid has " + std::to_string(g.dim(0)) + " channels and " + std::to_string(g.dim(1)) +
                          " time slices");
    }
    const Index H = g.dim(2), W = g.dim(3);
    double lo = INFINITY, hi = -INFINITY;
    for (Index r = 0; r < H; ++r) {
        for (Index c = 0; c < W; ++c) {
            lo = std::min(lo, g.at(channel, time, r, c));
            hi = std::max(hi, g.at(channel, time, r, c));
        }
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw NumericError("grid contains non-finite values");
    }
    std::ofstream os = open_out(out_path);
    os << "P2\n" << W << ' ' << H << "\n255\n";
    for (Index r = H - 1; r >= 0; --r) {
        for (Index c = 0; c < W; ++c) {
            const double v = g.at(channel, time, r, c);
            const long level = hi > lo ? std::lround(255.0 * (v - lo) / (hi - lo)) : 0;
            os << level << (c + 1 < W ? ' ' : '\n');
        }
    }
    close_out(os, out_path);
    out << std::setprecision(17) << "min=" << lo << " max=" << hi << '\n';
}

std::string one_line(std::string s)
{
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"symptomcast: next-day symptom forecasting from survey grids", "symptomcast"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    std::string config, data, out_path, lambda, profiles, checkpoint, report, resolutions, date, grid, loss;
    int k = 4, test_days = 14;
    std::uint64_t seed = 1;
    Index channel = 0, time = 0;

    auto* gen = app.add_subcommand("generate", "write a synthetic survey CSV and its intensity grid");
    gen->add_option("--config", config, "run config (key=value)");
    gen->add_option("--out", out_path, "survey CSV")->required();
    gen->add_option("--lambda", lambda, "ground-truth intensity grid file")->required();

    auto* fit = app.add_subcommand("fit-profiles", "fit the profile mixture on pre-test records");
    fit->add_option("--data", data, "survey CSV")->required();
    fit->add_option("--k", k, "cluster count")->check(CLI::PositiveNumber);
    fit->add_option("--seed", seed, "EM seed");
    fit->add_option("--config", config, "run config (bounds, test_days, EM settings)");
    fit->add_option("--out", out_path, "profile model file")->required();

    auto* tr = app.add_subcommand("train", "train on every window before the test period");
    tr->add_option("--data", data, "survey CSV")->required();
    tr->add_option("--profiles", profiles, "profile model file")->required();
    tr->add_option("--config", config, "run config");
    tr->add_option("--out", out_path, "checkpoint file")->required();
    tr->add_option("--loss", loss, "loss-history CSV (default: <out>.loss.csv)");

    auto* ev = app.add_subcommand("eval", "score a checkpoint on the test period");
    ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    ev->add_option("--data", data, "survey CSV")->required();
    ev->add_option("--report", report, "metrics CSV")->required();
    ev->add_option("--test-days", test_days, "length of the test period")->check(CLI::PositiveNumber);

    auto* ab = app.add_subcommand("ablate", "compare the model variants under cross-validation");
    ab->add_option("--data", data, "survey CSV")->required();
    ab->add_option("--config", config, "run config");
    ab->add_option("--report", report, "comparison CSV")->required();

    auto* sw = app.add_subcommand("sweep", "cross-validated R2 across grid resolutions");
    sw->add_option("--data", data, "survey CSV")->required();
    sw->add_option("--resolutions", resolutions, "comma list of ROWSxCOLS")->required();
    sw->add_option("--config", config, "run config");
    sw->add_option("--report", report, "curve CSV")->required();

    auto* pr = app.add_subcommand("predict", "forecast (mu, sigma) grids for one day");
    pr->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    pr->add_option("--data", data, "survey CSV")->required();
    pr->add_option("--date", date, "target day, YYYY-MM-DD or day index")->required();
    pr->add_option("--out", out_path, "grid file, channels mu and sigma")->required();

    auto* rd = app.add_subcommand("render", "render one grid slice as a plain PGM");
    rd->add_option("--grid", grid, "grid file")->required();
    rd->add_option("--out", out_path, "PGM file")->required();
    rd->add_option("--channel", channel, "channel index");
    rd->add_option("--time", time, "time index");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << version_string() << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << '\n';
        return kUsage;
    }

    try {
        if (gen->parsed()) {
            cmd_generate(config, out_path, lambda, out);
        } else if (fit->parsed()) {
            cmd_fit_profiles(data, k, seed, config, out_path, out, err);
        } else if (tr->parsed()) {
            cmd_train(data, profiles, config, out_path, loss.empty() ? out_path + ".loss.csv" : loss, out, err);
        } else if (ev->parsed()) {
            cmd_eval(checkpoint, data, report, test_days, out, err);
        } else if (ab->parsed()) {
            cmd_ablate(data, config, report, out, err);
        } else if (sw->parsed()) {
            cmd_sweep(data, resolutions, config, report, out, err);
        } else if (pr->parsed()) {
            cmd_predict(checkpoint, data, date, out_path, out, err);
        } else if (rd->parsed()) {
            cmd_render(grid, out_path, channel, time, out);
        }
    } catch (const ConfigError& e) {
        err << "error: config: " << one_line(e.what()) << '\n';
        return kConfig;
    } catch (const DataError& e) {
        err << "error: data: " << one_line(e.what()) << '\n';
        return kData;
    } catch (const NumericError& e) {
        err << "error: numeric: " << one_line(e.what()) << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << '\n';
        return kInternal;
    }
    return kOk;
}

} // namespace symptomcast::cli
