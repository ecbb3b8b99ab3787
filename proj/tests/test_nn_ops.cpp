#include "symptomcast/nn/gradcheck.hpp"
#include "symptomcast/nn/loss.hpp"
#include "symptomcast/nn/ops.hpp"
#include "symptomcast/nn/params.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace symptomcast::nn;
using testutil::dot;
using testutil::random_tensor;

namespace {

TensorXd zeros_bias(Index n) { return TensorXd({n}); }

// Weighted-sum loss: makes every output coordinate matter with a distinct weight.
struct Probe {
    TensorXd weights;
    double operator()(const TensorXd& out) const { return dot(weights, out); }
};

} // namespace

TEST_SUITE("conv3d")
{
    TEST_CASE("1x1x1 unit kernel is the identity")
    {
        std::mt19937_64 rng(1);
        const TensorXd x = random_tensor({1, 3, 4, 5}, rng);
        const TensorXd k = TensorXd::constant({1, 1, 1, 1, 1}, 1.0);
        const TensorXd y = conv3d(x, k, zeros_bias(1), {1, 1, 1}, {0, 0, 0});
        CHECK(y.shape() == x.shape());
        CHECK((y.vec() - x.vec()).cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("all-ones 3x3x3 over all-ones input sums to 27")
    {
        const TensorXd x = TensorXd::constant({1, 3, 3, 3}, 1.0);
        const TensorXd k = TensorXd::constant({1, 1, 3, 3, 3}, 1.0);
        const TensorXd y = conv3d(x, k, zeros_bias(1), {1, 1, 1}, {0, 0, 0});
        REQUIRE(y.shape() == Shape{1, 1, 1, 1});
        CHECK(y[0] == 27.0);
    }

    TEST_CASE("strided padded shape and finite-difference gradients")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            TensorXd x = random_tensor({2, 3, 5, 5}, rng);
            TensorXd k = random_tensor({4, 2, 3, 3, 3}, rng);
            TensorXd b = random_tensor({4}, rng);
            const Dims3 s{1, 2, 2}, p{1, 1, 1};
            const TensorXd y = conv3d(x, k, b, s, p);
            REQUIRE(y.shape() == Shape{4, 3, 3, 3});

            const Probe probe{random_tensor(y.shape(), rng)};
            const ConvGrads g = conv3d_backward(x, k, probe.weights, s, p);
            TensorXd* vars[] = {&x, &k, &b};
            const TensorXd* grads[] = {&g.input, &g.kernel, &g.bias};
            const auto r = grad_check(vars, grads, [&] { return probe(conv3d(x, k, b, s, p)); },
                                      {.seed = seed});
            CHECK_MESSAGE(r.max_rel_error < 1e-5, "seed " << seed << " worst " << r.worst);
        }
    }

    TEST_CASE("shape mismatch names both shapes")
    {
        const TensorXd x({3, 2, 4, 4});
        const TensorXd k({1, 2, 1, 1, 1});
        CHECK_THROWS_WITH_AS(conv3d(x, k, zeros_bias(1), {1, 1, 1}, {0, 0, 0}),
                             doctest::Contains("[3x2x4x4] vs [1x2x1x1x1]"), std::invalid_argument);
    }
}

TEST_SUITE("deconv")
{
    TEST_CASE("unit kernel stride 1 is the identity")
    {
        std::mt19937_64 rng(2);
        const TensorXd x = random_tensor({1, 2, 3, 3}, rng);
        const TensorXd k = TensorXd::constant({1, 1, 1, 1, 1}, 1.0);
        const TensorXd y = deconv3d(x, k, zeros_bias(1), {1, 1, 1}, {0, 0, 0}, {0, 0, 0});
        CHECK(y.shape() == x.shape());
        CHECK((y.vec() - x.vec()).cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("2x2 kernel stride 2 writes disjoint blocks")
    {
        TensorXd x({1, 2, 2});
        x.vec() << 1.0, 2.0, 3.0, 4.0;
        TensorXd k({1, 1, 2, 2});
        k.vec() << 0.5, -1.0, 2.0, 3.0;
        const TensorXd y = deconv2d(x, k, zeros_bias(1), {2, 2}, {0, 0}, {0, 0});
        REQUIRE(y.shape() == Shape{1, 4, 4});
        for (Index r = 0; r < 4; ++r) {
            for (Index c = 0; c < 4; ++c) {
                const double expected = x.at(0, r / 2, c / 2) * k.at(0, 0, r % 2, c % 2);
                CHECK(y.at(0, r, c) == expected);
            }
        }
    }

    TEST_CASE("adjoint of conv3d with shared kernels")
    {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            std::mt19937_64 rng(100 + seed);
            std::uniform_int_distribution<Index> small(1, 3), size(3, 8), st(1, 3), kd(1, 3);
            const Index a = small(rng), b = small(rng);
            Dims3 in{}, k{}, s{}, p{}, op{};
            for (int i = 0; i < 3; ++i) {
                in[i] = size(rng);
                k[i] = std::min(kd(rng), in[i]);
                s[i] = st(rng);
                p[i] = std::uniform_int_distribution<Index>(0, k[i] - 1)(rng);
            }
            const TensorXd x = random_tensor({a, in[0], in[1], in[2]}, rng);
            const TensorXd kernel = random_tensor({b, a, k[0], k[1], k[2]}, rng);
            const TensorXd y = conv3d(x, kernel, zeros_bias(b), s, p);
            for (int i = 0; i < 3; ++i) {
                op[i] = (in[i] + 2 * p[i] - k[i]) % s[i];
            }
            const TensorXd w = random_tensor(y.shape(), rng);
            const TensorXd back = deconv3d(w, kernel, zeros_bias(a), s, p, op);
            REQUIRE(back.shape() == x.shape());
            const double lhs = dot(y, w);
            const double rhs = dot(x, back);
            CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }

    TEST_CASE("deconv3d gradients match finite differences")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(200 + seed);
            TensorXd x = random_tensor({3, 2, 3, 4}, rng);
            TensorXd k = random_tensor({3, 2, 2, 3, 3}, rng);
            TensorXd b = random_tensor({2}, rng);
            const Dims3 s{1, 2, 2}, p{0, 1, 1}, op{0, 1, 0};
            const TensorXd y = deconv3d(x, k, b, s, p, op);
            REQUIRE(y.shape() == Shape{2, 3, 6, 7});
            const Probe probe{random_tensor(y.shape(), rng)};
            const ConvGrads g = deconv3d_backward(x, k, probe.weights, s, p);
            TensorXd* vars[] = {&x, &k, &b};
            const TensorXd* grads[] = {&g.input, &g.kernel, &g.bias};
            const auto r = grad_check(vars, grads, [&] { return probe(deconv3d(x, k, b, s, p, op)); },
                                      {.seed = seed});
            CHECK_MESSAGE(r.max_rel_error < 1e-5, "seed " << seed << " worst " << r.worst);
        }
    }

    TEST_CASE("deconv2d gradients match finite differences")
    {
        std::mt19937_64 rng(7);
        TensorXd x = random_tensor({4, 3, 3}, rng);
        TensorXd k = random_tensor({4, 2, 3, 3}, rng);
        TensorXd b = random_tensor({2}, rng);
        const TensorXd y = deconv2d(x, k, b, {1, 1}, {1, 1}, {0, 0});
        REQUIRE(y.shape() == Shape{2, 3, 3});
        const Probe probe{random_tensor(y.shape(), rng)};
        const ConvGrads g = deconv2d_backward(x, k, probe.weights, {1, 1}, {1, 1});
        TensorXd* vars[] = {&x, &k, &b};
        const TensorXd* grads[] = {&g.input, &g.kernel, &g.bias};
        const auto r =
            grad_check(vars, grads, [&] { return probe(deconv2d(x, k, b, {1, 1}, {1, 1}, {0, 0})); });
        CHECK(r.max_rel_error < 1e-5);
    }

    TEST_CASE("output_padding must stay below stride")
    {
        const TensorXd x({1, 1, 2, 2});
        const TensorXd k({1, 1, 1, 2, 2});
        CHECK_THROWS_AS(deconv3d(x, k, zeros_bias(1), {1, 2, 2}, {0, 0, 0}, {0, 2, 0}), std::invalid_argument);
    }
}

TEST_SUITE("dense and activations")
{
    TEST_CASE("identity weights and zero bias")
    {
        std::mt19937_64 rng(3);
        const TensorXd x = random_tensor({5}, rng);
        TensorXd w({5, 5});
        w.matrix(5, 5).setIdentity();
        CHECK((dense(x, w, zeros_bias(5)).vec() - x.vec()).norm() == 0.0);
    }

    TEST_CASE("zero weights return the bias")
    {
        std::mt19937_64 rng(4);
        const TensorXd x = random_tensor({6}, rng);
        const TensorXd b = random_tensor({3}, rng);
        CHECK((dense(x, TensorXd({3, 6}), b).vec() - b.vec()).norm() == 0.0);
    }

    TEST_CASE("dense gradients match finite differences")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(300 + seed);
            TensorXd x = random_tensor({7}, rng);
            TensorXd w = random_tensor({4, 7}, rng);
            TensorXd b = random_tensor({4}, rng);
            const Probe probe{random_tensor({4}, rng)};
            const DenseGrads g = dense_backward(x, w, probe.weights);
            TensorXd* vars[] = {&x, &w, &b};
            const TensorXd* grads[] = {&g.input, &g.weights, &g.bias};
            const auto r = grad_check(vars, grads, [&] { return probe(dense(x, w, b)); }, {.seed = seed});
            CHECK(r.max_rel_error < 1e-6);
        }
    }

    TEST_CASE("relu and softplus values")
    {
        TensorXd t({2});
        t.vec() << -1.0, 2.0;
        const TensorXd r = relu(t);
        CHECK(r[0] == 0.0);
        CHECK(r[1] == 2.0);
        CHECK(softplus(0.0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
        // log(1 + e^40) - 40 = 4.248e-18 at 40 digits.
        CHECK(softplus(40.0) - 40.0 < 1e-12);
        CHECK(std::isfinite(softplus(800.0)));
        CHECK(softplus(-800.0) >= 0.0);
    }
}

TEST_SUITE("trunc_gauss_nll")
{
    const auto quad_z = [](double mu, double sigma) {
        const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
        return testutil::simpson(
            [&](double x) { return norm * std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)); }, 0.0, 1.0,
            10000);
    };

    TEST_CASE("centered narrow case agrees with quadrature")
    {
        const double z = quad_z(0.5, 0.1);
        CHECK(std::abs(z - (ndtr(5.0) - ndtr(-5.0))) < 1e-9);
        const double expected = std::log(0.1 * std::sqrt(2.0 * std::numbers::pi)) + std::log(z);
        const PointNll p = trunc_gauss_nll_point(0.5, 0.5, 0.1);
        CHECK(std::abs(p.value - expected) < 1e-9);
        // 40-digit reference.
        CHECK(std::abs(p.value - -1.3836471330926809834) < 1e-12);
    }

    TEST_CASE("unit sigma case agrees with quadrature")
    {
        const double z = quad_z(0.0, 1.0);
        CHECK(std::abs(z - (ndtr(1.0) - ndtr(0.0))) < 1e-9);
        const double phi = std::exp(-0.125) / std::sqrt(2.0 * std::numbers::pi);
        CHECK(std::abs(trunc_gauss_nll_point(0.5, 0.0, 1.0).value - -std::log(phi / z)) < 1e-9);
        CHECK(std::abs(trunc_gauss_nll_point(0.5, 0.0, 1.0).value - -0.030923793657398639911) < 1e-12);
    }

    TEST_CASE("symmetric about the center of symmetric bounds")
    {
        for (double d : {0.01, 0.1, 0.3, 0.5}) {
            const double a = trunc_gauss_nll_point(0.5 + d, 0.5, 0.2).value;
            const double b = trunc_gauss_nll_point(0.5 - d, 0.5, 0.2).value;
            CHECK(std::abs(a - b) < 1e-14);
        }
    }

    TEST_CASE("wide bounds reduce to the plain Gaussian")
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-2.0, 2.0), us(0.05, 3.0);
        for (int i = 0; i < 200; ++i) {
            const double x = u(rng), mu = u(rng), s = us(rng);
            const double plain = 0.5 * std::pow((x - mu) / s, 2) + std::log(s) + 0.5 * std::log(2 * std::numbers::pi);
            const PointNll p = trunc_gauss_nll_point(x, mu, s, {-1e9, 1e9});
            CHECK(std::abs(p.value - plain) < 1e-9);
            CHECK(std::abs(p.d_mu - (mu - x) / (s * s)) < 1e-9);
        }
    }

    TEST_CASE("analytic derivatives match central differences")
    {
        std::mt19937_64 rng(12);
        std::uniform_real_distribution<double> ux(0.0, 1.0), um(-1.0, 2.0), us(0.05, 2.0);
        for (int i = 0; i < 500; ++i) {
            const double x = ux(rng), mu = um(rng), s = us(rng);
            const PointNll p = trunc_gauss_nll_point(x, mu, s);
            const double h = 1e-5;
            const double dmu = (trunc_gauss_nll_point(x, mu + h, s).value - trunc_gauss_nll_point(x, mu - h, s).value) / (2 * h);
            const double ds = (trunc_gauss_nll_point(x, mu, s + h).value - trunc_gauss_nll_point(x, mu, s - h).value) / (2 * h);
            CHECK(relative_error(p.d_mu, dmu, 1e-4) < 1e-6);
            CHECK(relative_error(p.d_sigma, ds, 1e-4) < 1e-6);
        }
    }

    TEST_CASE("mean of the truncated density matches quadrature")
    {
        std::mt19937_64 rng(14);
        std::uniform_real_distribution<double> um(-1.0, 2.0), us(0.05, 2.0);
        for (int i = 0; i < 50; ++i) {
            const double mu = um(rng), s = us(rng);
            const double m = testutil::simpson([&](double x) { return x * trunc_gauss_pdf(x, mu, s); }, 0.0, 1.0, 10000);
            CHECK(std::abs(trunc_gauss_mean(mu, s) - m) < 1e-9);
        }
        CHECK(trunc_gauss_mean(0.5, 0.3) == doctest::Approx(0.5).epsilon(1e-15));
        // far-off locations pile the mass against the nearer bound
        CHECK(trunc_gauss_mean(-40.0, 0.05) < 1e-3);
        CHECK(trunc_gauss_mean(40.0, 0.05) > 1.0 - 1e-3);
        CHECK(trunc_gauss_mean(-40.0, 0.05) >= 0.0);
    }

    TEST_CASE("stays finite far outside the bounds")
    {
        for (double mu : {-50.0, -5.0, 6.0, 80.0}) {
            const PointNll p = trunc_gauss_nll_point(0.5, mu, 0.01);
            CHECK(std::isfinite(p.value));
            CHECK(std::isfinite(p.d_mu));
            CHECK(std::isfinite(p.d_sigma));
        }
    }

    TEST_CASE("sigma below the floor is clamped with zero derivative")
    {
        const PointNll a = trunc_gauss_nll_point(0.5, 0.5, 1e-7);
        const PointNll b = trunc_gauss_nll_point(0.5, 0.5, kSigmaFloor);
        CHECK(a.value == b.value);
        CHECK(a.d_sigma == 0.0);
    }

    TEST_CASE("grid loss averages masked pixels and rejects an empty mask")
    {
        TensorXd mu({2, 2}), sigma = TensorXd::constant({2, 2}, 0.2), target({2, 2});
        mu.vec() << 0.1, 0.4, 0.5, 0.9;
        target.vec() << 0.0, 0.5, 1.0, 0.7;
        Mask mask(4);
        mask << true, false, true, true;
        const NllResult r = trunc_gauss_nll(mu, sigma, target, mask);
        double expected = 0.0;
        for (Index i : {0, 2, 3}) {
            expected += trunc_gauss_nll_point(target[i], mu[i], 0.2).value;
        }
        CHECK(r.loss == doctest::Approx(expected / 3.0).epsilon(1e-14));
        CHECK(r.grad_mu[1] == 0.0);
        CHECK(r.grad_sigma[1] == 0.0);
        CHECK_THROWS_AS(trunc_gauss_nll(mu, sigma, target, Mask::Constant(4, false)), std::invalid_argument);
    }
}

TEST_SUITE("adam")
{
    TEST_CASE("zero gradient leaves parameters unchanged")
    {
        ParamSet ps;
        const auto i = ps.add("w", {3});
        ps[i].value.vec() << 1.0, -2.0, 3.0;
        adam_step(ps, {.lr = 0.1});
        CHECK(ps[i].value.vec() == Eigen::Vector3d(1.0, -2.0, 3.0));
        CHECK(ps[i].m.vec().isZero());
        CHECK(ps.step() == 1);
    }

    TEST_CASE("zero gradient decays existing moments")
    {
        ParamSet ps;
        const auto i = ps.add("w", {1});
        ps[i].m[0] = 0.5;
        ps[i].v[0] = 0.25;
        adam_step(ps, {.lr = 0.0});
        CHECK(ps[i].m[0] == doctest::Approx(0.45));
        CHECK(ps[i].v[0] == doctest::Approx(0.25 * 0.999));
        CHECK(ps[i].value[0] == 0.0);
    }

    TEST_CASE("first step moves each coordinate by lr against the gradient sign")
    {
        ParamSet ps;
        const auto i = ps.add("w", {2});
        ps[i].grad.vec() << 3.0, -0.02;
        adam_step(ps, {.lr = 1e-3});
        CHECK(ps[i].value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
        CHECK(ps[i].value[1] == doctest::Approx(1e-3).epsilon(1e-5));
        CHECK(ps[i].grad.vec().isZero());
    }

    TEST_CASE("constant gradient decreases the parameter monotonically")
    {
        ParamSet ps;
        const auto i = ps.add("w", {1});
        double previous = ps[i].value[0];
        for (int step = 0; step < 100; ++step) {
            ps[i].grad[0] = 0.7;
            adam_step(ps, {.lr = 1e-2});
            CHECK(ps[i].value[0] < previous);
            previous = ps[i].value[0];
        }
        // Bias-corrected moments of a constant gradient are exact: every step is -lr.
        CHECK(previous == doctest::Approx(-1.0).epsilon(1e-6));
    }
}

TEST_SUITE("grad_check")
{
    TEST_CASE("five-point stencil is exact on a cubic")
    {
        TensorXd x = TensorXd::constant({1}, 0.3);
        const TensorXd g = TensorXd::constant({1}, 3.0 * 0.09);
        TensorXd* vars[] = {&x};
        const TensorXd* grads[] = {&g};
        const auto r = grad_check(vars, grads, [&] { return x[0] * x[0] * x[0]; });
        CHECK(r.max_rel_error < 1e-9);
    }

    TEST_CASE("kink-aware mode accepts the one-sided slope and still catches wrong gradients")
    {
        // relu kink 1e-5 to the left of the evaluation point
        TensorXd x = TensorXd::constant({1}, 1e-5);
        const TensorXd right = TensorXd::constant({1}, 2.0);
        const TensorXd wrong = TensorXd::constant({1}, 1.0);
        auto f = [&] { return 2.0 * std::max(x[0], 0.0); };
        TensorXd* vars[] = {&x};
        const TensorXd* ok[] = {&right};
        const TensorXd* bad[] = {&wrong};
        CHECK(grad_check(vars, ok, f).max_rel_error > 1e-2);
        const auto r = grad_check(vars, ok, f, {.kink_aware = true});
        CHECK(r.max_rel_error < 1e-9);
        CHECK(r.kinks == 1);
        CHECK(grad_check(vars, bad, f, {.kink_aware = true}).max_rel_error > 0.4);
        // smooth functions are never flagged
        TensorXd y = TensorXd::constant({1}, 0.7);
        const TensorXd gy = TensorXd::constant({1}, std::cos(0.7));
        TensorXd* yv[] = {&y};
        const TensorXd* yg[] = {&gy};
        const auto s = grad_check(yv, yg, [&] { return std::sin(y[0]); }, {.kink_aware = true});
        CHECK(s.kinks == 0);
        CHECK(s.max_rel_error < 1e-9);
    }
}
