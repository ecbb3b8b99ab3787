#include "symptomcast/nn/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace symptomcast::nn {

namespace {

using RowMatrix = TensorXd::RowMatrix;

[[noreturn]] void shape_error(const std::string& what, const Shape& a, const Shape& b)
{
    throw std::invalid_argument(what + ": " + shape_str(a) + " vs " + shape_str(b));
}

Dims3 spatial(const TensorXd& t) { return {t.dim(1), t.dim(2), t.dim(3)}; }
Dims3 kernel_extent(const TensorXd& k) { return {k.dim(2), k.dim(3), k.dim(4)}; }

// Unfolds a C x D0 x D1 x D2 volume into a (C*k0*k1*k2) x (o0*o1*o2) matrix
// whose column j holds the receptive field of output position j.
RowMatrix im2col(const double* x, Index channels, Dims3 in, Dims3 k, Dims3 s, Dims3 p, Dims3 out)
{
    const Index npos = out[0] * out[1] * out[2];
    RowMatrix col(channels * k[0] * k[1] * k[2], npos);
    Index row = 0;
    for (Index c = 0; c < channels; ++c) {
        const double* xc = x + c * in[0] * in[1] * in[2];
        for (Index a = 0; a < k[0]; ++a) {
            for (Index b = 0; b < k[1]; ++b) {
                for (Index d = 0; d < k[2]; ++d, ++row) {
                    double* dst = col.row(row).data();
                    for (Index ot = 0; ot < out[0]; ++ot) {
                        const Index t = ot * s[0] - p[0] + a;
                        for (Index oh = 0; oh < out[1]; ++oh) {
                            const Index h = oh * s[1] - p[1] + b;
                            double* line = dst + (ot * out[1] + oh) * out[2];
                            if (t < 0 || t >= in[0] || h < 0 || h >= in[1]) {
                                std::fill(line, line + out[2], 0.0);
                                continue;
                            }
                            const double* src = xc + (t * in[1] + h) * in[2];
                            for (Index ow = 0; ow < out[2]; ++ow) {
                                const Index w = ow * s[2] - p[2] + d;
                                line[ow] = (w < 0 || w >= in[2]) ? 0.0 : src[w];
                            }
                        }
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: scatters-and-adds columns back into the volume.
void col2im(const RowMatrix& col, double* x, Index channels, Dims3 in, Dims3 k, Dims3 s, Dims3 p, Dims3 out)
{
    Index row = 0;
    for (Index c = 0; c < channels; ++c) {
        double* xc = x + c * in[0] * in[1] * in[2];
        for (Index a = 0; a < k[0]; ++a) {
            for (Index b = 0; b < k[1]; ++b) {
                for (Index d = 0; d < k[2]; ++d, ++row) {
                    const double* src = col.row(row).data();
                    for (Index ot = 0; ot < out[0]; ++ot) {
                        const Index t = ot * s[0] - p[0] + a;
                        if (t < 0 || t >= in[0]) {
                            continue;
                        }
                        for (Index oh = 0; oh < out[1]; ++oh) {
                            const Index h = oh * s[1] - p[1] + b;
                            if (h < 0 || h >= in[1]) {
                                continue;
                            }
                            const double* line = src + (ot * out[1] + oh) * out[2];
                            double* dst = xc + (t * in[1] + h) * in[2];
                            for (Index ow = 0; ow < out[2]; ++ow) {
                                const Index w = ow * s[2] - p[2] + d;
                                if (w >= 0 && w < in[2]) {
                                    dst[w] += line[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void check_conv(const TensorXd& input, const TensorXd& kernel, Dims3 stride, Dims3 padding, Index in_channel_axis)
{
    if (input.rank() != 4 || kernel.rank() != 5) {
        shape_error("conv expects 4-d input and 5-d kernel", input.shape(), kernel.shape());
    }
    if (kernel.dim(in_channel_axis) != input.dim(0)) {
        shape_error("kernel input channels do not match input", input.shape(), kernel.shape());
    }
    for (int i = 0; i < 3; ++i) {
        if (stride[i] < 1 || padding[i] < 0) {
            throw std::invalid_argument("conv stride must be >= 1 and padding >= 0");
        }
    }
}

void add_bias(TensorXd& out, const TensorXd& bias)
{
    const Index channels = out.dim(0);
    if (bias.size() != channels) {
        shape_error("bias does not match output channels", out.shape(), bias.shape());
    }
    auto m = out.matrix(channels, out.size() / channels);
    m.colwise() += bias.vec();
}

TensorXd bias_grad(const TensorXd& grad_output)
{
    const Index channels = grad_output.dim(0);
    TensorXd g({channels});
    g.vec() = grad_output.matrix(channels, grad_output.size() / channels).rowwise().sum();
    return g;
}

Shape to3d(const Shape& s2) { return {s2[0], 1, s2[1], s2[2]}; }
Shape kernel_to3d(const Shape& k2) { return {k2[0], k2[1], 1, k2[2], k2[3]}; }

} // namespace

Index conv_out_size(Index in, Index kernel, Index stride, Index pad)
{
    return (in + 2 * pad - kernel) / stride + 1;
}

Index deconv_out_size(Index in, Index kernel, Index stride, Index pad, Index output_padding)
{
    return (in - 1) * stride - 2 * pad + kernel + output_padding;
}

TensorXd conv3d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, Dims3 stride, Dims3 padding)
{
    check_conv(input, kernel, stride, padding, 1);
    const Dims3 in = spatial(input);
    const Dims3 k = kernel_extent(kernel);
    Dims3 out{};
    for (int i = 0; i < 3; ++i) {
        if (k[i] > in[i] + 2 * padding[i]) {
            shape_error("kernel larger than padded input", input.shape(), kernel.shape());
        }
        out[i] = conv_out_size(in[i], k[i], stride[i], padding[i]);
    }
    const Index cout = kernel.dim(0);
    const Index cin = input.dim(0);
    const RowMatrix col = im2col(input.data(), cin, in, k, stride, padding, out);
    TensorXd result({cout, out[0], out[1], out[2]});
    result.matrix(cout, col.cols()).noalias() = kernel.matrix(cout, col.rows()) * col;
    add_bias(result, bias);
    return result;
}

ConvGrads conv3d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output, Dims3 stride,
                          Dims3 padding)
{
    check_conv(input, kernel, stride, padding, 1);
    const Dims3 in = spatial(input);
    const Dims3 k = kernel_extent(kernel);
    const Dims3 out = spatial(grad_output);
    const Index cout = kernel.dim(0);
    const Index cin = input.dim(0);
    if (grad_output.dim(0) != cout) {
        shape_error("grad_output channels do not match kernel", grad_output.shape(), kernel.shape());
    }
    const RowMatrix col = im2col(input.data(), cin, in, k, stride, padding, out);
    const auto gout = grad_output.matrix(cout, col.cols());

    ConvGrads g{TensorXd(input.shape()), TensorXd(kernel.shape()), bias_grad(grad_output)};
    g.kernel.matrix(cout, col.rows()).noalias() = gout * col.transpose();
    const RowMatrix gcol = kernel.matrix(cout, col.rows()).transpose() * gout;
    col2im(gcol, g.input.data(), cin, in, k, stride, padding, out);
    return g;
}

TensorXd deconv3d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, Dims3 stride, Dims3 padding,
                  Dims3 output_padding)
{
    check_conv(input, kernel, stride, padding, 0);
    const Dims3 in = spatial(input);
    const Dims3 k = kernel_extent(kernel);
    Dims3 out{};
    for (int i = 0; i < 3; ++i) {
        if (output_padding[i] < 0 || output_padding[i] >= stride[i]) {
            throw std::invalid_argument("deconv output_padding must be in [0, stride)");
        }
        out[i] = deconv_out_size(in[i], k[i], stride[i], padding[i], output_padding[i]);
        if (out[i] < 1) {
            shape_error("deconv output would be empty", input.shape(), kernel.shape());
        }
    }
    const Index cin = input.dim(0);
    const Index cout = kernel.dim(1);
    const Index npos = in[0] * in[1] * in[2];
    const Index krows = cout * k[0] * k[1] * k[2];
    const RowMatrix col = kernel.matrix(cin, krows).transpose() * input.matrix(cin, npos);
    TensorXd result({cout, out[0], out[1], out[2]});
    col2im(col, result.data(), cout, out, k, stride, padding, in);
    add_bias(result, bias);
    return result;
}

ConvGrads deconv3d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output, Dims3 stride,
                            Dims3 padding)
{
    check_conv(input, kernel, stride, padding, 0);
    const Dims3 in = spatial(input);
    const Dims3 k = kernel_extent(kernel);
    const Dims3 out = spatial(grad_output);
    const Index cin = input.dim(0);
    const Index cout = kernel.dim(1);
    if (grad_output.dim(0) != cout) {
        shape_error("grad_output channels do not match kernel", grad_output.shape(), kernel.shape());
    }
    const Index npos = in[0] * in[1] * in[2];
    const Index krows = cout * k[0] * k[1] * k[2];
    const RowMatrix gcol = im2col(grad_output.data(), cout, out, k, stride, padding, in);

    ConvGrads g{TensorXd(input.shape()), TensorXd(kernel.shape()), bias_grad(grad_output)};
    g.input.matrix(cin, npos).noalias() = kernel.matrix(cin, krows) * gcol;
    g.kernel.matrix(cin, krows).noalias() = input.matrix(cin, npos) * gcol.transpose();
    return g;
}

TensorXd conv2d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, std::array<Index, 2> stride,
                std::array<Index, 2> padding)
{
    if (input.rank() != 3 || kernel.rank() != 4) {
        shape_error("conv2d expects 3-d input and 4-d kernel", input.shape(), kernel.shape());
    }
    TensorXd out = conv3d(input.reshaped(to3d(input.shape())), kernel.reshaped(kernel_to3d(kernel.shape())), bias,
                          {1, stride[0], stride[1]}, {0, padding[0], padding[1]});
    return out.reshaped({out.dim(0), out.dim(2), out.dim(3)});
}

TensorXd deconv2d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, std::array<Index, 2> stride,
                  std::array<Index, 2> padding, std::array<Index, 2> output_padding)
{
    if (input.rank() != 3 || kernel.rank() != 4) {
        shape_error("deconv2d expects 3-d input and 4-d kernel", input.shape(), kernel.shape());
    }
    TensorXd out = deconv3d(input.reshaped(to3d(input.shape())), kernel.reshaped(kernel_to3d(kernel.shape())), bias,
                            {1, stride[0], stride[1]}, {0, padding[0], padding[1]},
                            {0, output_padding[0], output_padding[1]});
    return out.reshaped({out.dim(0), out.dim(2), out.dim(3)});
}

ConvGrads deconv2d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output,
                            std::array<Index, 2> stride, std::array<Index, 2> padding)
{
    ConvGrads g = deconv3d_backward(input.reshaped(to3d(input.shape())), kernel.reshaped(kernel_to3d(kernel.shape())),
                                    grad_output.reshaped(to3d(grad_output.shape())), {1, stride[0], stride[1]},
                                    {0, padding[0], padding[1]});
    g.input = g.input.reshaped(input.shape());
    g.kernel = g.kernel.reshaped(kernel.shape());
    return g;
}

TensorXd dense(const TensorXd& input, const TensorXd& weights, const TensorXd& bias)
{
    if (weights.rank() != 2 || weights.dim(1) != input.size() || bias.size() != weights.dim(0)) {
        shape_error("dense shape mismatch", input.shape(), weights.shape());
    }
    TensorXd out({weights.dim(0)});
    out.vec().noalias() = weights.matrix(weights.dim(0), weights.dim(1)) * input.vec();
    out.vec() += bias.vec();
    return out;
}

DenseGrads dense_backward(const TensorXd& input, const TensorXd& weights, const TensorXd& grad_output)
{
    const Index m = weights.dim(0);
    const Index n = weights.dim(1);
    if (grad_output.size() != m || input.size() != n) {
        shape_error("dense backward shape mismatch", grad_output.shape(), weights.shape());
    }
    DenseGrads g{TensorXd(input.shape()), TensorXd(weights.shape()), TensorXd({m})};
    g.input.vec().noalias() = weights.matrix(m, n).transpose() * grad_output.vec();
    g.weights.matrix(m, n).noalias() = grad_output.vec() * input.vec().transpose();
    g.bias.vec() = grad_output.vec();
    return g;
}

TensorXd relu(const TensorXd& t)
{
    TensorXd out(t.shape());
    out.vec() = t.vec().cwiseMax(0.0);
    return out;
}

TensorXd relu_backward(const TensorXd& input, const TensorXd& grad_output)
{
    TensorXd g(input.shape());
    g.vec() = (input.vec().array() > 0.0).select(grad_output.vec(), 0.0);
    return g;
}

double softplus(double x)
{
    if (x > 30.0) {
        return x + std::log1p(std::exp(-x));
    }
    if (x < -30.0) {
        return std::exp(x);
    }
    return std::log1p(std::exp(x));
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

TensorXd softplus(const TensorXd& t)
{
    TensorXd out(t.shape());
    out.vec() = t.vec().unaryExpr([](double x) { return softplus(x); });
    return out;
}

} // namespace symptomcast::nn
