#ifndef SYMPTOMCAST_NN_PARAMS_HPP
#define SYMPTOMCAST_NN_PARAMS_HPP

#include "symptomcast/nn/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace symptomcast::nn {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct Param {
    std::string name;
    TensorXd value;
    TensorXd grad;
    TensorXd m; // Adam first moment
    TensorXd v; // Adam second moment
};

class ParamSet {
public:
    // Adds a zero-initialized parameter and returns its handle.
    std::size_t add(std::string name, Shape shape);

    Param& operator[](std::size_t i) { return params_.at(i); }
    const Param& operator[](std::size_t i) const { return params_.at(i); }
    const Param& find(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    Index parameter_count() const;
    std::int64_t step() const { return step_; }

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    // Checkpoint: a text manifest (version, step, one "param name shape offset"
    // line per tensor) followed by little-endian float64 payload holding
    // values then Adam moments.
    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    friend void adam_step(ParamSet&, const AdamOptions&);
    std::vector<Param> params_;
    std::int64_t step_ = 0;
};

// Bias-corrected Adam update; increments the step count and zeroes gradients.
void adam_step(ParamSet& params, const AdamOptions& options);

} // namespace symptomcast::nn

#endif
