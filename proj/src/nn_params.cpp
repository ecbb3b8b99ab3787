#include "symptomcast/nn/params.hpp"

#include "symptomcast/binio.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace symptomcast::nn {

namespace {
constexpr int kParamsVersion = 1;
}

std::size_t ParamSet::add(std::string name, Shape shape)
{
    for (const auto& p : params_) {
        if (p.name == name) {
            throw std::invalid_argument("duplicate parameter name: " + name);
        }
    }
    params_.push_back(Param{std::move(name), TensorXd(shape), TensorXd(shape), TensorXd(shape), TensorXd(shape)});
    return params_.size() - 1;
}

const Param& ParamSet::find(const std::string& name) const
{
    for (const auto& p : params_) {
        if (p.name == name) {
            return p;
        }
    }
    throw std::out_of_range("no parameter named " + name);
}

Index ParamSet::parameter_count() const
{
    Index n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

void ParamSet::zero_grad()
{
    for (auto& p : params_) {
        p.grad.set_zero();
    }
}

void ParamSet::save(std::ostream& os) const
{
    os << "SCPARAMS " << kParamsVersion << '\n';
    os << "step " << step_ << '\n';
    os << "count " << params_.size() << '\n';
    Index offset = 0;
    for (const auto& p : params_) {
        os << "param " << p.name << ' ' << p.value.rank();
        for (Index d : p.value.shape()) {
            os << ' ' << d;
        }
        os << ' ' << offset << '\n';
        offset += p.value.size();
    }
    os << "payload " << 3 * offset << '\n';
    for (const TensorXd Param::*field : {&Param::value, &Param::m, &Param::v}) {
        for (const auto& p : params_) {
            const TensorXd& t = p.*field;
            for (Index i = 0; i < t.size(); ++i) {
                binio::write_le(os, t[i]);
            }
        }
    }
}

void ParamSet::load(std::istream& is)
{
    auto expect_line = [&is](const std::string& key) {
        std::string line;
        if (!std::getline(is, line)) {
            throw std::runtime_error("parameter manifest truncated before '" + key + "'");
        }
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) {
            throw std::runtime_error("parameter manifest: expected '" + key + "', got '" + line + "'");
        }
        return ls.str().substr(k.size());
    };

    {
        std::istringstream ls(expect_line("SCPARAMS"));
        int version = 0;
        ls >> version;
        if (version != kParamsVersion) {
            throw std::runtime_error("unsupported parameter checkpoint version " + std::to_string(version));
        }
    }
    std::int64_t step = 0;
    std::istringstream(expect_line("step")) >> step;
    std::size_t count = 0;
    std::istringstream(expect_line("count")) >> count;
    if (count != params_.size()) {
        throw std::runtime_error("checkpoint has " + std::to_string(count) + " tensors, network expects " +
                                 std::to_string(params_.size()));
    }
    Index expected_offset = 0;
    for (auto& p : params_) {
        std::istringstream ls(expect_line("param"));
        std::string name;
        Index rank = 0;
        ls >> name >> rank;
        Shape shape(static_cast<std::size_t>(rank));
        for (auto& d : shape) {
            ls >> d;
        }
        Index offset = -1;
        ls >> offset;
        if (!ls || name != p.name || shape != p.value.shape() || offset != expected_offset) {
            throw std::runtime_error("checkpoint tensor '" + name + "' " + shape_str(shape) +
                                     " does not match network tensor '" + p.name + "' " +
                                     shape_str(p.value.shape()));
        }
        expected_offset += p.value.size();
    }
    Index payload = 0;
    std::istringstream(expect_line("payload")) >> payload;
    if (payload != 3 * expected_offset) {
        throw std::runtime_error("checkpoint payload size mismatch");
    }
    for (TensorXd Param::*field : {&Param::value, &Param::m, &Param::v}) {
        for (auto& p : params_) {
            TensorXd& t = p.*field;
            for (Index i = 0; i < t.size(); ++i) {
                t[i] = binio::read_le<double>(is);
            }
        }
    }
    step_ = step;
    zero_grad();
}

void adam_step(ParamSet& params, const AdamOptions& o)
{
    ++params.step_;
    const double t = static_cast<double>(params.step_);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (auto& p : params.params_) {
        auto g = p.grad.vec().array();
        auto m = p.m.vec().array();
        auto v = p.v.vec().array();
        m = o.beta1 * m + (1.0 - o.beta1) * g;
        v = o.beta2 * v + (1.0 - o.beta2) * g.square();
        p.value.vec().array() -= o.lr * (m / c1) / ((v / c2).sqrt() + o.eps);
        p.grad.set_zero();
    }
}

} // namespace symptomcast::nn
