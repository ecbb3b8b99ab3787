#ifndef SYMPTOMCAST_NN_OPS_HPP
#define SYMPTOMCAST_NN_OPS_HPP

#include "symptomcast/nn/tensor.hpp"

#include <array>

namespace symptomcast::nn {

using Dims3 = std::array<Index, 3>;

// Convolution layout: input C_in x T x H x W, kernel C_out x C_in x kt x kh x kw,
// bias C_out. Cross-correlation, no kernel flip.
TensorXd conv3d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, Dims3 stride, Dims3 padding);

struct ConvGrads {
    TensorXd input;
    TensorXd kernel;
    TensorXd bias;
};

ConvGrads conv3d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output, Dims3 stride,
                          Dims3 padding);

// Transposed convolution: input C_in x T x H x W, kernel C_in x C_out x kt x kh x kw
// (same tensor as the forward conv mapping C_out -> C_in), bias C_out.
// out = (in - 1) * s - 2p + k + output_padding on every axis.
TensorXd deconv3d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, Dims3 stride, Dims3 padding,
                  Dims3 output_padding);

ConvGrads deconv3d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output, Dims3 stride,
                            Dims3 padding);

// 2-d variants on C x H x W tensors; kernels are C_out x C_in x kh x kw (conv)
// and C_in x C_out x kh x kw (deconv).
TensorXd conv2d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, std::array<Index, 2> stride,
                std::array<Index, 2> padding);
TensorXd deconv2d(const TensorXd& input, const TensorXd& kernel, const TensorXd& bias, std::array<Index, 2> stride,
                  std::array<Index, 2> padding, std::array<Index, 2> output_padding);
ConvGrads deconv2d_backward(const TensorXd& input, const TensorXd& kernel, const TensorXd& grad_output,
                            std::array<Index, 2> stride, std::array<Index, 2> padding);

Index conv_out_size(Index in, Index kernel, Index stride, Index pad);
Index deconv_out_size(Index in, Index kernel, Index stride, Index pad, Index output_padding);

// y = W x + b with x of any shape (flattened), W M x N, b M.
TensorXd dense(const TensorXd& input, const TensorXd& weights, const TensorXd& bias);

struct DenseGrads {
    TensorXd input;
    TensorXd weights;
    TensorXd bias;
};

DenseGrads dense_backward(const TensorXd& input, const TensorXd& weights, const TensorXd& grad_output);

TensorXd relu(const TensorXd& t);
TensorXd relu_backward(const TensorXd& input, const TensorXd& grad_output);

double softplus(double x);
// d softplus / dx, the logistic function.
double sigmoid(double x);
TensorXd softplus(const TensorXd& t);

} // namespace symptomcast::nn

#endif
