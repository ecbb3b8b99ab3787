#include "symptomcast/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace symptomcast::nn {

namespace {

void fill_uniform(TensorXd& t, double fan_in, std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < t.size(); ++i) {
        t[i] = dist(rng);
    }
}

std::string dims_str(const Dims3& d)
{
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

void accumulate(Param& p, const TensorXd& g) { p.grad.vec() += g.vec(); }

} // namespace

// -- Conv3dLayer --------------------------------------------------------------

Conv3dLayer::Conv3dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels,
                         Dims3 kernel, Dims3 stride, Dims3 padding)
    : kernel_(params.add(name + ".kernel", {out_channels, in_channels, kernel[0], kernel[1], kernel[2]})),
      bias_(params.add(name + ".bias", {out_channels})),
      in_channels_(in_channels),
      out_channels_(out_channels),
      ksize_(kernel),
      stride_(stride),
      padding_(padding)
{
}

TensorXd Conv3dLayer::forward(const ParamSet& params, const TensorXd& input)
{
    input_ = input;
    return conv3d(input, params[kernel_].value, params[bias_].value, stride_, padding_);
}

TensorXd Conv3dLayer::backward(ParamSet& params, const TensorXd& grad_output)
{
    ConvGrads g = conv3d_backward(input_, params[kernel_].value, grad_output, stride_, padding_);
    accumulate(params[kernel_], g.kernel);
    accumulate(params[bias_], g.bias);
    return std::move(g.input);
}

Shape Conv3dLayer::output_shape(const Shape& in) const
{
    if (in.size() != 4 || in[0] != in_channels_) {
        throw std::invalid_argument("conv3d layer expects " + std::to_string(in_channels_) + " x T x H x W, got " +
                                    shape_str(in));
    }
    Shape out{out_channels_, 0, 0, 0};
    for (std::size_t i = 0; i < 3; ++i) {
        out[i + 1] = conv_out_size(in[i + 1], ksize_[i], stride_[i], padding_[i]);
        if (out[i + 1] < 1) {
            throw std::invalid_argument("conv3d layer output collapses for input " + shape_str(in));
        }
    }
    return out;
}

std::string Conv3dLayer::describe() const
{
    return "conv3d(" + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + ", k=" +
           dims_str(ksize_) + ", s=" + dims_str(stride_) + ", p=" + dims_str(padding_) + ")";
}

void Conv3dLayer::init(ParamSet& params, std::mt19937_64& rng) const
{
    fill_uniform(params[kernel_].value, static_cast<double>(in_channels_ * ksize_[0] * ksize_[1] * ksize_[2]), rng);
    params[bias_].value.set_zero();
}

// -- Deconv3dLayer ------------------------------------------------------------

Deconv3dLayer::Deconv3dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels,
                             Dims3 kernel, Dims3 stride, Dims3 padding, Dims3 output_padding)
    : kernel_(params.add(name + ".kernel", {in_channels, out_channels, kernel[0], kernel[1], kernel[2]})),
      bias_(params.add(name + ".bias", {out_channels})),
      in_channels_(in_channels),
      out_channels_(out_channels),
      ksize_(kernel),
      stride_(stride),
      padding_(padding),
      output_padding_(output_padding)
{
}

TensorXd Deconv3dLayer::forward(const ParamSet& params, const TensorXd& input)
{
    input_ = input;
    return deconv3d(input, params[kernel_].value, params[bias_].value, stride_, padding_, output_padding_);
}

TensorXd Deconv3dLayer::backward(ParamSet& params, const TensorXd& grad_output)
{
    ConvGrads g = deconv3d_backward(input_, params[kernel_].value, grad_output, stride_, padding_);
    accumulate(params[kernel_], g.kernel);
    accumulate(params[bias_], g.bias);
    return std::move(g.input);
}

Shape Deconv3dLayer::output_shape(const Shape& in) const
{
    if (in.size() != 4 || in[0] != in_channels_) {
        throw std::invalid_argument("deconv3d layer expects " + std::to_string(in_channels_) +
                                    " x T x H x W, got " + shape_str(in));
    }
    Shape out{out_channels_, 0, 0, 0};
    for (std::size_t i = 0; i < 3; ++i) {
        out[i + 1] = deconv_out_size(in[i + 1], ksize_[i], stride_[i], padding_[i], output_padding_[i]);
    }
    return out;
}

std::string Deconv3dLayer::describe() const
{
    return "deconv3d(" + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + ", k=" +
           dims_str(ksize_) + ", s=" + dims_str(stride_) + ", p=" + dims_str(padding_) + ")";
}

void Deconv3dLayer::init(ParamSet& params, std::mt19937_64& rng) const
{
    // Each output voxel receives roughly in_channels * prod(k / s) terms.
    const double fan_in = static_cast<double>(in_channels_ * ksize_[0] * ksize_[1] * ksize_[2]) /
                          static_cast<double>(stride_[0] * stride_[1] * stride_[2]);
    fill_uniform(params[kernel_].value, std::max(1.0, fan_in), rng);
    params[bias_].value.set_zero();
}

// -- Deconv2dLayer ------------------------------------------------------------

Deconv2dLayer::Deconv2dLayer(ParamSet& params, const std::string& name, Index in_channels, Index out_channels,
                             std::array<Index, 2> kernel, std::array<Index, 2> stride, std::array<Index, 2> padding)
    : kernel_(params.add(name + ".kernel", {in_channels, out_channels, kernel[0], kernel[1]})),
      bias_(params.add(name + ".bias", {out_channels})),
      in_channels_(in_channels),
      out_channels_(out_channels),
      ksize_(kernel),
      stride_(stride),
      padding_(padding)
{
}

TensorXd Deconv2dLayer::forward(const ParamSet& params, const TensorXd& input)
{
    input_ = input;
    return deconv2d(input, params[kernel_].value, params[bias_].value, stride_, padding_, {0, 0});
}

TensorXd Deconv2dLayer::backward(ParamSet& params, const TensorXd& grad_output)
{
    ConvGrads g = deconv2d_backward(input_, params[kernel_].value, grad_output, stride_, padding_);
    accumulate(params[kernel_], g.kernel);
    accumulate(params[bias_], g.bias);
    return std::move(g.input);
}

Shape Deconv2dLayer::output_shape(const Shape& in) const
{
    if (in.size() != 3 || in[0] != in_channels_) {
        throw std::invalid_argument("deconv2d layer expects " + std::to_string(in_channels_) + " x H x W, got " +
                                    shape_str(in));
    }
    return {out_channels_, deconv_out_size(in[1], ksize_[0], stride_[0], padding_[0], 0),
            deconv_out_size(in[2], ksize_[1], stride_[1], padding_[1], 0)};
}

std::string Deconv2dLayer::describe() const
{
    return "deconv2d(" + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + ", k=" +
           std::to_string(ksize_[0]) + "x" + std::to_string(ksize_[1]) + ")";
}

void Deconv2dLayer::init(ParamSet& params, std::mt19937_64& rng) const
{
    const double fan_in =
        static_cast<double>(in_channels_ * ksize_[0] * ksize_[1]) / static_cast<double>(stride_[0] * stride_[1]);
    fill_uniform(params[kernel_].value, std::max(1.0, fan_in), rng);
    params[bias_].value.set_zero();
}

// -- DenseLayer ---------------------------------------------------------------

DenseLayer::DenseLayer(ParamSet& params, const std::string& name, Index in_features, Index out_features)
    : weights_(params.add(name + ".weights", {out_features, in_features})),
      bias_(params.add(name + ".bias", {out_features})),
      in_features_(in_features),
      out_features_(out_features)
{
}

TensorXd DenseLayer::forward(const ParamSet& params, const TensorXd& input)
{
    input_ = input;
    return dense(input, params[weights_].value, params[bias_].value);
}

TensorXd DenseLayer::backward(ParamSet& params, const TensorXd& grad_output)
{
    // accumulates in place; the weight gradient can be tens of megabytes
    const TensorXd& w = params[weights_].value;
    if (grad_output.size() != out_features_) {
        throw std::invalid_argument("dense backward expects " + std::to_string(out_features_) + " gradients, got " +
                                    shape_str(grad_output.shape()));
    }
    params[weights_].grad.matrix(out_features_, in_features_).noalias() +=
        grad_output.vec() * input_.vec().transpose();
    params[bias_].grad.vec() += grad_output.vec();
    TensorXd grad_input(input_.shape());
    grad_input.vec().noalias() = w.matrix(out_features_, in_features_).transpose() * grad_output.vec();
    return grad_input;
}

Shape DenseLayer::output_shape(const Shape& in) const
{
    if (shape_size(in) != in_features_) {
        throw std::invalid_argument("dense layer expects " + std::to_string(in_features_) + " inputs, got " +
                                    shape_str(in));
    }
    return {out_features_};
}

std::string DenseLayer::describe() const
{
    return "dense(" + std::to_string(in_features_) + "->" + std::to_string(out_features_) + ")";
}

void DenseLayer::init(ParamSet& params, std::mt19937_64& rng) const
{
    fill_uniform(params[weights_].value, static_cast<double>(in_features_), rng);
    params[bias_].value.set_zero();
}

// -- shape-only layers --------------------------------------------------------

TensorXd ReluLayer::forward(const ParamSet&, const TensorXd& input)
{
    input_ = input;
    return relu(input);
}

TensorXd ReluLayer::backward(ParamSet&, const TensorXd& grad_output) { return relu_backward(input_, grad_output); }

TensorXd ReshapeLayer::forward(const ParamSet&, const TensorXd& input)
{
    input_shape_ = input.shape();
    return input.reshaped(shape_);
}

TensorXd ReshapeLayer::backward(ParamSet&, const TensorXd& grad_output)
{
    return grad_output.reshaped(input_shape_);
}

Shape ReshapeLayer::output_shape(const Shape& in) const
{
    if (shape_size(in) != shape_size(shape_)) {
        throw std::invalid_argument("cannot reshape " + shape_str(in) + " to " + shape_str(shape_));
    }
    return shape_;
}

TensorXd CropLayer::forward(const ParamSet&, const TensorXd& input)
{
    input_shape_ = input.shape();
    const Shape out_shape = output_shape(input.shape());
    TensorXd out(out_shape);
    for (Index c = 0; c < out_shape[0]; ++c) {
        for (Index r = 0; r < rows_; ++r) {
            for (Index q = 0; q < cols_; ++q) {
                out.at(c, r, q) = input.at(c, r, q);
            }
        }
    }
    return out;
}

TensorXd CropLayer::backward(ParamSet&, const TensorXd& grad_output)
{
    TensorXd g(input_shape_);
    for (Index c = 0; c < input_shape_[0]; ++c) {
        for (Index r = 0; r < rows_; ++r) {
            for (Index q = 0; q < cols_; ++q) {
                g.at(c, r, q) = grad_output.at(c, r, q);
            }
        }
    }
    return g;
}

Shape CropLayer::output_shape(const Shape& in) const
{
    if (in.size() != 3 || in[1] < rows_ || in[2] < cols_) {
        throw std::invalid_argument("crop to " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                    " needs a larger C x H x W map, got " + shape_str(in));
    }
    return {in[0], rows_, cols_};
}

std::string CropLayer::describe() const { return "crop(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

TensorXd LastStepLayer::forward(const ParamSet&, const TensorXd& input)
{
    input_shape_ = input.shape();
    const Shape s = output_shape(input.shape());
    const Index plane = s[1] * s[2];
    const Index t_last = input.dim(1) - 1;
    TensorXd out(s);
    for (Index c = 0; c < s[0]; ++c) {
        out.vec().segment(c * plane, plane) = input.vec().segment((c * input.dim(1) + t_last) * plane, plane);
    }
    return out;
}

TensorXd LastStepLayer::backward(ParamSet&, const TensorXd& grad_output)
{
    TensorXd g(input_shape_);
    const Index plane = input_shape_[2] * input_shape_[3];
    const Index t_last = input_shape_[1] - 1;
    for (Index c = 0; c < input_shape_[0]; ++c) {
        g.vec().segment((c * input_shape_[1] + t_last) * plane, plane) = grad_output.vec().segment(c * plane, plane);
    }
    return g;
}

Shape LastStepLayer::output_shape(const Shape& in) const
{
    if (in.size() != 4) {
        throw std::invalid_argument("last_step expects C x T x H x W, got " + shape_str(in));
    }
    return {in[0], in[2], in[3]};
}

} // namespace symptomcast::nn
