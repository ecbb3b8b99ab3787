#ifndef SYMPTOMCAST_MODELS_HPP
#define SYMPTOMCAST_MODELS_HPP

#include "symptomcast/config.hpp"
#include "symptomcast/gridder.hpp"
#include "symptomcast/nn/layers.hpp"
#include "symptomcast/nn/params.hpp"
#include "symptomcast/profiles.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace symptomcast {

enum class ModelMode { full, raw_features, baseline_fc };

std::string to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& text); // throws ConfigError

struct PatchConfig {
    Index rows = 10;
    Index cols = 10;
    Index stride = 10;
};

struct ModelConfig {
    ModelMode mode = ModelMode::full;
    Index input_channels = 4 * kSlotSize;
    int input_days = 3;
    int horizon = 1;
    Index grid_rows = 20;
    Index grid_cols = 20;
    std::optional<PatchConfig> patch;
    Index c1 = 16;
    Index c2 = 32;
    Index latent = 128;
    Index baseline_hidden = 256;
    double lr = 1e-4;
    int epochs = 50;
    int batch_size = 4;
    std::uint64_t seed = 1;
    // Start the output layer at zero so initial forecasts are spatially flat.
    bool zero_init_head = true;

    void validate() const; // throws ConfigError

    // Spatial size the network itself sees: the patch when patching, else the grid.
    Index net_rows() const { return patch ? patch->rows : grid_rows; }
    Index net_cols() const { return patch ? patch->cols : grid_cols; }

    // key=value lines, readable by apply().
    void write(std::ostream& os) const;
    // Returns false when the key is not a model key.
    bool apply(const KeyValue& kv);
};

struct PredictionGrid {
    TensorXd mu;    // H x W
    TensorXd sigma; // H x W, >= kSigmaFloor

    // Per-pixel mean of the truncated predictive distribution on [0, 1]; this
    // is the point forecast used for scoring.
    TensorXd expected() const;
};

class Network {
public:
    // Builds and initializes; shape inconsistencies throw ConfigError with the
    // trace up to the failing layer.
    explicit Network(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    Index parameter_count() const { return params_.parameter_count(); }
    const std::vector<std::string>& shape_trace() const { return trace_; }
    nn::Shape input_shape() const;

    PredictionGrid forward(const TensorXd& input);
    // Accumulates parameter gradients for the last forward().
    void backward(const TensorXd& grad_mu, const TensorXd& grad_sigma);

private:
    ModelConfig config_;
    nn::ParamSet params_;
    std::vector<nn::LayerPtr> layers_;
    std::vector<std::string> trace_;
    TensorXd raw_sigma_;
};

// Network-sized training units: full-grid samples are cut into patches when
// the network is patched; units without observed labels are dropped.
std::vector<WindowSample> training_units(const Network& net, const std::vector<WindowSample>& samples);

struct TrainResult {
    std::vector<double> loss_history; // pixel-weighted mean NLL per epoch
};

// Mini-batch Adam on the truncated-Gaussian NLL pooled over the batch's
// observed pixels. Non-finite losses throw NumericError.
TrainResult train(Network& net, const std::vector<WindowSample>& samples, std::ostream* log = nullptr);

// Tiles a full-grid sample with edge-aligned patches; overlapping tiles
// average mu and combine sigma by root mean square. Contributions are summed
// in sorted order, so the result does not depend on the tile order.
PredictionGrid predict_full_map(Network& net, const WindowSample& sample);
PredictionGrid predict_full_map(Network& net, const WindowSample& sample,
                                const std::vector<std::pair<Index, Index>>& tile_origins);

// Full-grid prediction for either a patched or an unpatched network.
PredictionGrid predict(Network& net, const WindowSample& sample);

// Everything besides weights that inference needs.
struct CheckpointMeta {
    Bounds2d bounds;
    ChannelNorm norm;
    ProfileModel profiles;
    Interpolation interpolation = Interpolation::nearest;
};

struct LoadedCheckpoint {
    Network network;
    CheckpointMeta meta;
};

void save_checkpoint(std::ostream& os, const Network& net, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(std::istream& is); // throws DataError

} // namespace symptomcast

#endif
