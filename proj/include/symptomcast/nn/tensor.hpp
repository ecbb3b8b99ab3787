#ifndef SYMPTOMCAST_NN_TENSOR_HPP
#define SYMPTOMCAST_NN_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace symptomcast::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major N-d array. Storage is a plain Eigen vector so whole-tensor
// arithmetic goes through Eigen expressions, and 2-d views are Eigen::Map.
template <typename Scalar>
class Tensor {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}
    Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != shape_size(shape_)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor constant(Shape shape, Scalar value)
    {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
    Index size() const { return data_.size(); }

    Vector& vec() { return data_; }
    const Vector& vec() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& at(Index a, Index b) { return data_[a * shape_[1] + b]; }
    Scalar at(Index a, Index b) const { return data_[a * shape_[1] + b]; }
    Scalar& at(Index a, Index b, Index c) { return data_[(a * shape_[1] + b) * shape_[2] + c]; }
    Scalar at(Index a, Index b, Index c) const { return data_[(a * shape_[1] + b) * shape_[2] + c]; }
    Scalar& at(Index a, Index b, Index c, Index d)
    {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    Scalar at(Index a, Index b, Index c, Index d) const
    {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    // rows x cols view over the flat storage (row-major).
    Eigen::Map<RowMatrix> matrix(Index rows, Index cols)
    {
        check_view(rows, cols);
        return Eigen::Map<RowMatrix>(data_.data(), rows, cols);
    }
    Eigen::Map<const RowMatrix> matrix(Index rows, Index cols) const
    {
        check_view(rows, cols);
        return Eigen::Map<const RowMatrix>(data_.data(), rows, cols);
    }

    Tensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != size()) {
            throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    void set_zero() { data_.setZero(); }
    bool all_finite() const { return data_.allFinite(); }

private:
    void check_view(Index rows, Index cols) const
    {
        if (rows * cols != size()) {
            throw std::invalid_argument("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                        " does not cover tensor " + shape_str(shape_));
        }
    }

    Shape shape_;
    Vector data_;
};

using TensorXd = Tensor<double>;

} // namespace symptomcast::nn

#endif
