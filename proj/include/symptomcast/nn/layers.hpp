#ifndef SYMPTOMCAST_NN_LAYERS_HPP
#define SYMPTOMCAST_NN_LAYERS_HPP

#include "symptomcast/nn/ops.hpp"
#include "symptomcast/nn/params.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace symptomcast::nn {

// A stage of a sequential network. forward() caches what backward() needs, so
// each forward must be followed by at most one backward before the next
// forward. Parameter gradients accumulate into the ParamSet.
class Layer {
public:
    virtual ~Layer() = default;
    virtual TensorXd forward(const ParamSet& params, const TensorXd& input) = 0;
    virtual TensorXd backward(ParamSet& params, const TensorXd& grad_output) = 0;
    virtual Shape output_shape(const Shape& input_shape) const = 0;
    virtual std::string describe() const = 0;
    // Draws initial parameter values; parameter-free layers do nothing.
    virtual void init(ParamSet&, std::mt19937_64&) const {}
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv3dLayer final : public Layer {
public:
    Conv3dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels, Dims3 kernel,
                Dims3 stride, Dims3 padding);
    TensorXd forward(const ParamSet& params, const TensorXd& input) override;
    TensorXd backward(ParamSet& params, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override;
    void init(ParamSet& params, std::mt19937_64& rng) const override;

private:
    std::size_t kernel_, bias_;
    Index in_channels_, out_channels_;
    Dims3 ksize_, stride_, padding_;
    TensorXd input_;
};

class Deconv3dLayer final : public Layer {
public:
    Deconv3dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels, Dims3 kernel,
                  Dims3 stride, Dims3 padding, Dims3 output_padding);
    TensorXd forward(const ParamSet& params, const TensorXd& input) override;
    TensorXd backward(ParamSet& params, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override;
    void init(ParamSet& params, std::mt19937_64& rng) const override;

private:
    std::size_t kernel_, bias_;
    Index in_channels_, out_channels_;
    Dims3 ksize_, stride_, padding_, output_padding_;
    TensorXd input_;
};

// Transposed convolution on C x H x W maps.
class Deconv2dLayer final : public Layer {
public:
    Deconv2dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels,
                  std::array<Index, 2> kernel, std::array<Index, 2> stride, std::array<Index, 2> padding);
    TensorXd forward(const ParamSet& params, const TensorXd& input) override;
    TensorXd backward(ParamSet& params, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override;
    void init(ParamSet& params, std::mt19937_64& rng) const override;

private:
    std::size_t kernel_, bias_;
    Index in_channels_, out_channels_;
    std::array<Index, 2> ksize_, stride_, padding_;
    TensorXd input_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(ParamSet& params, const std::string& name, Index in_features, Index out_features);
    TensorXd forward(const ParamSet& params, const TensorXd& input) override;
    TensorXd backward(ParamSet& params, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override;
    void init(ParamSet& params, std::mt19937_64& rng) const override;

private:
    std::size_t weights_, bias_;
    Index in_features_, out_features_;
    TensorXd input_;
};

class ReluLayer final : public Layer {
public:
    TensorXd forward(const ParamSet&, const TensorXd& input) override;
    TensorXd backward(ParamSet&, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override { return input_shape; }
    std::string describe() const override { return "relu"; }

private:
    TensorXd input_;
};

class ReshapeLayer final : public Layer {
public:
    explicit ReshapeLayer(Shape shape) : shape_(std::move(shape)) {}
    TensorXd forward(const ParamSet&, const TensorXd& input) override;
    TensorXd backward(ParamSet&, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override { return "reshape" + shape_str(shape_); }

private:
    Shape shape_;
    Shape input_shape_;
};

// Keeps the top-left rows x cols window of a C x H x W map.
class CropLayer final : public Layer {
public:
    CropLayer(Index rows, Index cols) : rows_(rows), cols_(cols) {}
    TensorXd forward(const ParamSet&, const TensorXd& input) override;
    TensorXd backward(ParamSet&, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override;

private:
    Index rows_, cols_;
    Shape input_shape_;
};

// C x T x H x W -> C x H x W, keeping the most recent time step.
class LastStepLayer final : public Layer {
public:
    TensorXd forward(const ParamSet&, const TensorXd& input) override;
    TensorXd backward(ParamSet&, const TensorXd& grad_output) override;
    Shape output_shape(const Shape& input_shape) const override;
    std::string describe() const override { return "last_step"; }

private:
    Shape input_shape_;
};

} // namespace symptomcast::nn

#endif
