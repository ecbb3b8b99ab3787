#include "symptomcast/models.hpp"

#include "symptomcast/errors.hpp"
#include "symptomcast/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace symptomcast {

using nn::Shape;
using nn::shape_str;

std::string to_string(ModelMode mode)
{
    switch (mode) {
    case ModelMode::full:
        return "full";
    case ModelMode::raw_features:
        return "raw_features";
    case ModelMode::baseline_fc:
        return "baseline_fc";
    }
    return "?";
}

ModelMode parse_model_mode(const std::string& text)
{
    for (ModelMode m : {ModelMode::full, ModelMode::raw_features, ModelMode::baseline_fc}) {
        if (text == to_string(m)) {
            return m;
        }
    }
    throw ConfigError("unknown model mode '" + text + "' (full, raw_features, baseline_fc)");
}

void ModelConfig::validate() const
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("model config: " + what);
        }
    };
    require(input_channels >= 1, "input_channels must be positive");
    if (mode == ModelMode::full) {
        require(input_channels % kSlotSize == 0, "full mode needs a multiple of 16 input channels");
    } else if (mode == ModelMode::raw_features) {
        require(input_channels == kSlotSize, "raw_features mode needs exactly 16 input channels");
    }
    require(input_days >= 1, "input_days must be positive");
    require(horizon >= 1, "horizon must be positive");
    require(grid_rows >= 1 && grid_cols >= 1, "grid must be at least 1x1");
    if (patch) {
        require(patch->rows >= 1 && patch->cols >= 1 && patch->stride >= 1, "patch sizes must be positive");
        require(patch->rows <= grid_rows && patch->cols <= grid_cols, "patch larger than the grid");
    }
    require(c1 >= 1 && c2 >= 1 && latent >= 1 && baseline_hidden >= 1, "layer widths must be positive");
    require(std::isfinite(lr) && lr >= 0.0, "lr must be finite and non-negative");
    require(epochs >= 0, "epochs must be non-negative");
    require(batch_size >= 1, "batch_size must be positive");
}

void ModelConfig::write(std::ostream& os) const
{
    os << "mode=" << to_string(mode) << '\n'
       << "input_channels=" << input_channels << '\n'
       << "input_days=" << input_days << '\n'
       << "horizon=" << horizon << '\n'
       << "grid_rows=" << grid_rows << '\n'
       << "grid_cols=" << grid_cols << '\n';
    if (patch) {
        os << "patch=" << patch->rows << ',' << patch->cols << ',' << patch->stride << '\n';
    } else {
        os << "patch=off\n";
    }
    os << "c1=" << c1 << '\n'
       << "c2=" << c2 << '\n'
       << "latent=" << latent << '\n'
       << "baseline_hidden=" << baseline_hidden << '\n'
       << "lr=" << format_double(lr) << '\n'
       << "epochs=" << epochs << '\n'
       << "batch_size=" << batch_size << '\n'
       << "train_seed=" << seed << '\n'
       << "zero_init_head=" << (zero_init_head ? "true" : "false") << '\n';
}

bool ModelConfig::apply(const KeyValue& kv)
{
    const std::string& k = kv.key;
    auto as_int = [&] { return static_cast<int>(to_int(kv)); };
    if (k == "mode") {
        mode = parse_model_mode(kv.value);
    } else if (k == "input_channels") {
        input_channels = to_int(kv);
    } else if (k == "input_days") {
        input_days = as_int();
    } else if (k == "horizon") {
        horizon = as_int();
    } else if (k == "grid_rows") {
        grid_rows = to_int(kv);
    } else if (k == "grid_cols") {
        grid_cols = to_int(kv);
    } else if (k == "patch") {
        if (kv.value == "off") {
            patch.reset();
        } else {
            PatchConfig p;
            char c1_ = 0, c2_ = 0;
            std::istringstream ss(kv.value);
            if (!(ss >> p.rows >> c1_ >> p.cols >> c2_ >> p.stride) || c1_ != ',' || c2_ != ',' || !ss.eof()) {
                throw ConfigError("line " + std::to_string(kv.line) + ": patch must be 'off' or 'rows,cols,stride'");
            }
            patch = p;
        }
    } else if (k == "c1") {
        c1 = to_int(kv);
    } else if (k == "c2") {
        c2 = to_int(kv);
    } else if (k == "latent") {
        latent = to_int(kv);
    } else if (k == "baseline_hidden") {
        baseline_hidden = to_int(kv);
    } else if (k == "lr") {
        lr = to_double(kv);
    } else if (k == "epochs") {
        epochs = as_int();
    } else if (k == "batch_size") {
        batch_size = as_int();
    } else if (k == "train_seed") {
        seed = to_uint64(kv);
    } else if (k == "zero_init_head") {
        zero_init_head = to_bool(kv);
    } else {
        return false;
    }
    return true;
}

TensorXd PredictionGrid::expected() const
{
    TensorXd out(mu.shape());
    for (Index i = 0; i < mu.size(); ++i) {
        out[i] = nn::trunc_gauss_mean(mu[i], sigma[i]);
    }
    return out;
}

// -- Network ------------------------------------------------------------------

namespace {

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

} // namespace

Shape Network::input_shape() const
{
    return {config_.input_channels, config_.input_days, config_.net_rows(), config_.net_cols()};
}

Network::Network(ModelConfig config) : config_(std::move(config))
{
    config_.validate();
    const ModelConfig& c = config_;
    const Index T = c.input_days, H = c.net_rows(), W = c.net_cols();
    auto add = [this](nn::Layer* layer) { layers_.emplace_back(layer); };

    if (c.mode == ModelMode::baseline_fc) {
        add(new nn::LastStepLayer());
        add(new nn::DenseLayer(params_, "fc1", c.input_channels * H * W, c.baseline_hidden));
        add(new nn::ReluLayer());
        add(new nn::DenseLayer(params_, "fc2", c.baseline_hidden, 2 * H * W));
        add(new nn::ReshapeLayer({2, H, W}));
    } else {
        const Index h4 = ceil_div(ceil_div(H, 2), 2), w4 = ceil_div(ceil_div(W, 2), 2);
        add(new nn::Conv3dLayer(params_, "enc1", c.input_channels, c.c1, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}));
        add(new nn::ReluLayer());
        add(new nn::Conv3dLayer(params_, "enc2", c.c1, c.c2, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}));
        add(new nn::ReluLayer());
        add(new nn::DenseLayer(params_, "bottleneck", c.c2 * T * h4 * w4, c.latent));
        add(new nn::ReluLayer());
        add(new nn::DenseLayer(params_, "expand", c.latent, c.c2 * T * h4 * w4));
        add(new nn::ReshapeLayer({c.c2, T, h4, w4}));
        add(new nn::Deconv3dLayer(params_, "dec1", c.c2, c.c1, {1, 4, 4}, {1, 2, 2}, {0, 1, 1}, {0, 0, 0}));
        add(new nn::ReluLayer());
        const Index c3 = c.c1 / 2 > 0 ? c.c1 / 2 : 1;
        add(new nn::Deconv3dLayer(params_, "dec2", c.c1, c3, {1, 4, 4}, {1, 2, 2}, {0, 1, 1}, {0, 0, 0}));
        add(new nn::ReluLayer());
        add(new nn::ReshapeLayer({c3 * T, 4 * h4, 4 * w4}));
        add(new nn::Deconv2dLayer(params_, "head", c3 * T, 2, {3, 3}, {1, 1}, {1, 1}));
        add(new nn::CropLayer(H, W));
    }

    Shape s = input_shape();
    trace_.push_back("input " + shape_str(s));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            s = layers_[i]->output_shape(s);
        } catch (const std::invalid_argument& e) {
            std::string msg = "network shape error at layer " + std::to_string(i) + ": " + e.what() + "; trace:";
            for (const auto& t : trace_) {
                msg += " | " + t;
            }
            throw ConfigError(msg);
        }
        trace_.push_back(layers_[i]->describe() + " -> " + shape_str(s));
    }
    if (s != Shape{2, H, W}) {
        throw ConfigError("network output " + shape_str(s) + " does not match 2x" + std::to_string(H) + "x" +
                          std::to_string(W));
    }

    std::mt19937_64 rng(c.seed);
    for (const auto& layer : layers_) {
        layer->init(params_, rng);
    }
    if (c.zero_init_head) {
        for (auto& p : params_) {
            if (p.name == "head.kernel" || p.name == "fc2.weights") {
                p.value.vec().setZero();
            }
        }
    }
}

PredictionGrid Network::forward(const TensorXd& input)
{
    if (input.shape() != input_shape()) {
        throw std::invalid_argument("network expects input " + shape_str(input_shape()) + ", got " +
                                    shape_str(input.shape()));
    }
    TensorXd x = input;
    for (const auto& layer : layers_) {
        x = layer->forward(params_, x);
    }
    const Index H = x.dim(1), W = x.dim(2);
    const auto out = x.matrix(2, H * W);
    PredictionGrid p{TensorXd::zeros({H, W}), TensorXd::zeros({H, W})};
    raw_sigma_ = TensorXd::zeros({H, W});
    p.mu.vec() = out.row(0).transpose();
    raw_sigma_.vec() = out.row(1).transpose();
    for (Index i = 0; i < H * W; ++i) {
        p.sigma[i] = nn::softplus(raw_sigma_[i]) + nn::kSigmaFloor;
    }
    return p;
}

void Network::backward(const TensorXd& grad_mu, const TensorXd& grad_sigma)
{
    const Index H = raw_sigma_.dim(0), W = raw_sigma_.dim(1);
    TensorXd g = TensorXd::zeros({2, H, W});
    auto gm = g.matrix(2, H * W);
    gm.row(0) = grad_mu.vec().transpose();
    for (Index i = 0; i < H * W; ++i) {
        gm(1, i) = grad_sigma[i] * nn::sigmoid(raw_sigma_[i]);
    }
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        g = (*it)->backward(params_, g);
    }
}

// -- training -----------------------------------------------------------------

std::vector<WindowSample> training_units(const Network& net, const std::vector<WindowSample>& samples)
{
    const ModelConfig& c = net.config();
    std::vector<WindowSample> units;
    for (const auto& s : samples) {
        const Index H = s.input.dim(2), W = s.input.dim(3);
        if (H == c.net_rows() && W == c.net_cols()) {
            if (s.label_mask.any()) {
                units.push_back(s);
            }
        } else if (c.patch) {
            for (auto& p : extract_patches(s, c.patch->rows, c.patch->cols, c.patch->stride, c.patch->stride)) {
                if (p.label_mask.any()) {
                    units.push_back(std::move(p));
                }
            }
        } else {
            throw std::invalid_argument("sample grid " + std::to_string(H) + "x" + std::to_string(W) +
                                        " does not match the network");
        }
    }
    return units;
}

namespace {

// With a zeroed output layer the forecast is just the output bias. Start it at
// the training marginal: sigma = label SD, mu chosen so the truncated mean
// equals the label mean. Otherwise the bias needs hundreds of small Adam steps
// to get there, which unpatched models never get.
void calibrate_head(Network& net, const std::vector<WindowSample>& units)
{
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto& u : units) {
        for (Index i = 0; i < u.label.size(); ++i) {
            if (u.label_mask[i]) {
                sum += u.label[i];
                sq += u.label[i] * u.label[i];
                n += 1.0;
            }
        }
    }
    if (n < 2.0) {
        return;
    }
    const double mean = std::clamp(sum / n, 1e-4, 1.0 - 1e-4);
    const double sigma = std::max(std::sqrt(std::max(sq / n - (sum / n) * (sum / n), 0.0)), 0.01);
    double lo = -50.0, hi = 50.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (nn::trunc_gauss_mean(mid, sigma) < mean ? lo : hi) = mid;
    }
    const double mu = 0.5 * (lo + hi);
    const double raw = std::log(std::expm1(sigma - nn::kSigmaFloor));
    for (auto& p : net.params()) {
        if (p.name == "head.bias" || p.name == "fc2.bias") {
            const Index half = p.value.size() / 2;
            for (Index i = 0; i < p.value.size(); ++i) {
                p.value[i] = i < half ? mu : raw;
            }
        }
    }
}

} // namespace

TrainResult train(Network& net, const std::vector<WindowSample>& samples, std::ostream* log)
{
    const ModelConfig& c = net.config();
    const std::vector<WindowSample> units = training_units(net, samples);
    if (units.empty()) {
        throw DataError("no training samples with observed labels");
    }
    std::vector<std::size_t> order(units.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
    const nn::AdamOptions adam{.lr = c.lr};
    const std::size_t batch = static_cast<std::size_t>(c.batch_size);

    if (c.zero_init_head && net.params().step() == 0) {
        calibrate_head(net, units);
    }
    TrainResult result;
    net.params().zero_grad();
    for (int epoch = 1; epoch <= c.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0, pixels = 0.0;
        for (std::size_t start = 0, b = 1; start < order.size(); start += batch, ++b) {
            const std::size_t end = std::min(order.size(), start + batch);
            double n = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                n += static_cast<double>(units[order[i]].label_mask.count());
            }
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const WindowSample& s = units[order[i]];
                const PredictionGrid p = net.forward(s.input);
                if (!p.mu.all_finite() || !p.sigma.all_finite()) {
                    throw NumericError("non-finite prediction at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b));
                }
                const nn::NllResult r = nn::trunc_gauss_nll(p.mu, p.sigma, s.label, s.label_mask, {}, n);
                if (!std::isfinite(r.loss)) {
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(b));
                }
                batch_loss += r.loss;
                net.backward(r.grad_mu, r.grad_sigma);
            }
            nn::adam_step(net.params(), adam);
            total += batch_loss * n;
            pixels += n;
        }
        result.loss_history.push_back(total / pixels);
        if (log) {
            *log << "epoch " << epoch << " nll " << std::setprecision(6) << result.loss_history.back() << '\n';
        }
    }
    return result;
}

// -- inference ----------------------------------------------------------------

PredictionGrid predict_full_map(Network& net, const WindowSample& sample,
                                const std::vector<std::pair<Index, Index>>& tile_origins)
{
    const ModelConfig& c = net.config();
    const Index H = sample.input.dim(2), W = sample.input.dim(3);
    const Index ph = c.net_rows(), pw = c.net_cols();
    std::vector<std::vector<double>> mus(static_cast<std::size_t>(H * W)), sig2(mus.size());
    for (const auto& [r0, c0] : tile_origins) {
        if (r0 < 0 || c0 < 0 || r0 + ph > H || c0 + pw > W) {
            throw std::invalid_argument("tile origin outside the grid");
        }
        TensorXd sub = TensorXd::zeros({sample.input.dim(0), sample.input.dim(1), ph, pw});
        const Index planes = sample.input.dim(0) * sample.input.dim(1);
        for (Index p = 0; p < planes; ++p) {
            for (Index r = 0; r < ph; ++r) {
                for (Index q = 0; q < pw; ++q) {
                    sub[(p * ph + r) * pw + q] = sample.input[(p * H + r0 + r) * W + c0 + q];
                }
            }
        }
        const PredictionGrid out = net.forward(sub);
        for (Index r = 0; r < ph; ++r) {
            for (Index q = 0; q < pw; ++q) {
                const auto cell = static_cast<std::size_t>((r0 + r) * W + c0 + q);
                mus[cell].push_back(out.mu.at(r, q));
                sig2[cell].push_back(out.sigma.at(r, q) * out.sigma.at(r, q));
            }
        }
    }
    PredictionGrid result{TensorXd::zeros({H, W}), TensorXd::zeros({H, W})};
    for (std::size_t cell = 0; cell < mus.size(); ++cell) {
        if (mus[cell].empty()) {
            throw std::invalid_argument("tiles leave pixel " + std::to_string(cell) + " uncovered");
        }
        std::sort(mus[cell].begin(), mus[cell].end());
        std::sort(sig2[cell].begin(), sig2[cell].end());
        const double n = static_cast<double>(mus[cell].size());
        result.mu[static_cast<Index>(cell)] = std::accumulate(mus[cell].begin(), mus[cell].end(), 0.0) / n;
        result.sigma[static_cast<Index>(cell)] =
            std::sqrt(std::accumulate(sig2[cell].begin(), sig2[cell].end(), 0.0) / n);
    }
    return result;
}

PredictionGrid predict_full_map(Network& net, const WindowSample& sample)
{
    const ModelConfig& c = net.config();
    const Index stride = c.patch ? c.patch->stride : std::max(c.net_rows(), c.net_cols());
    const PatchGrid g = patch_grid(sample.input.dim(2), sample.input.dim(3), c.net_rows(), c.net_cols(), stride, stride);
    std::vector<std::pair<Index, Index>> origins;
    for (Index r : g.row_starts) {
        for (Index q : g.col_starts) {
            origins.emplace_back(r, q);
        }
    }
    return predict_full_map(net, sample, origins);
}

PredictionGrid predict(Network& net, const WindowSample& sample)
{
    if (sample.input.dim(2) == net.config().net_rows() && sample.input.dim(3) == net.config().net_cols()) {
        return net.forward(sample.input);
    }
    return predict_full_map(net, sample);
}

// -- checkpoints --------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

void write_vector(std::ostream& os, const char* tag, const Eigen::VectorXd& v)
{
    os << tag;
    for (Index i = 0; i < v.size(); ++i) {
        os << ' ' << format_double(v[i]);
    }
    os << '\n';
}

Eigen::VectorXd read_vector(std::istream& is, const char* tag, Index n)
{
    std::string t;
    if (!(is >> t) || t != tag) {
        throw DataError(std::string("checkpoint: expected '") + tag + "'");
    }
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) {
        if (!(is >> v[i])) {
            throw DataError(std::string("checkpoint: truncated '") + tag + "'");
        }
    }
    return v;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

} // namespace

void save_checkpoint(std::ostream& os, const Network& net, const CheckpointMeta& meta)
{
    std::ostringstream cfg;
    net.config().write(cfg);
    const std::string cfg_text = cfg.str();
    os << "SCCHECKPOINT " << kCheckpointVersion << '\n';
    os << "config " << std::count(cfg_text.begin(), cfg_text.end(), '\n') << '\n' << cfg_text;
    os << "bounds " << format_double(meta.bounds.x_min) << ' ' << format_double(meta.bounds.x_max) << ' '
       << format_double(meta.bounds.y_min) << ' ' << format_double(meta.bounds.y_max) << '\n';
    os << "interpolation " << (meta.interpolation == Interpolation::nearest ? "nearest" : "inverse_distance") << '\n';
    os << "norm " << meta.norm.mean.size() << '\n';
    write_vector(os, "mean", meta.norm.mean);
    write_vector(os, "stddev", meta.norm.stddev);
    os << "profile_fingerprint " << hex64(meta.profiles.fingerprint()) << '\n';
    meta.profiles.save(os);
    net.params().save(os);
    if (!os) {
        throw DataError("failed writing checkpoint");
    }
}

LoadedCheckpoint load_checkpoint(std::istream& is)
{
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "SCCHECKPOINT" || version != kCheckpointVersion) {
        throw DataError("not a checkpoint (bad header)");
    }
    int lines = 0;
    if (!(is >> tag >> lines) || tag != "config" || lines < 0) {
        throw DataError("checkpoint: missing config block");
    }
    is >> std::ws;
    std::string block;
    for (int i = 0; i < lines; ++i) {
        std::string line;
        if (!std::getline(is, line)) {
            throw DataError("checkpoint: truncated config block");
        }
        block += line + '\n';
    }
    ModelConfig config;
    try {
        std::istringstream ss(block);
        for (const KeyValue& kv : parse_key_values(ss)) {
            if (!config.apply(kv)) {
                throw DataError("checkpoint: unknown config key " + kv.key);
            }
        }
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config: ") + e.what());
    }

    CheckpointMeta meta;
    if (!(is >> tag >> meta.bounds.x_min >> meta.bounds.x_max >> meta.bounds.y_min >> meta.bounds.y_max) ||
        tag != "bounds") {
        throw DataError("checkpoint: missing bounds");
    }
    std::string interp;
    if (!(is >> tag >> interp) || tag != "interpolation" || (interp != "nearest" && interp != "inverse_distance")) {
        throw DataError("checkpoint: missing interpolation mode");
    }
    meta.interpolation = interp == "nearest" ? Interpolation::nearest : Interpolation::inverse_distance;
    Index channels = 0;
    if (!(is >> tag >> channels) || tag != "norm" || channels < 0) {
        throw DataError("checkpoint: missing normalization");
    }
    meta.norm.mean = read_vector(is, "mean", channels);
    meta.norm.stddev = read_vector(is, "stddev", channels);
    std::string fingerprint;
    if (!(is >> tag >> fingerprint) || tag != "profile_fingerprint") {
        throw DataError("checkpoint: missing profile fingerprint");
    }
    try {
        meta.profiles = ProfileModel::load(is);
    } catch (const std::exception& e) {
        throw DataError(std::string("checkpoint profile model: ") + e.what());
    }
    if (hex64(meta.profiles.fingerprint()) != fingerprint) {
        throw DataError("checkpoint: profile model does not match its fingerprint");
    }
    is >> std::ws;
    try {
        Network net(config);
        net.params().load(is);
        return LoadedCheckpoint{std::move(net), std::move(meta)};
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(std::string("checkpoint parameters: ") + e.what());
    }
}

} // namespace symptomcast
