// SPDX-License-Identifier: Apache-2.0
//
// airsl — split learning over MIMO wireless channels via over-the-air computation
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <catch2/catch_amalgamated.hpp>

#include <airsl/nn.hpp>

#include "helpers.hpp"

using namespace airsl;
using airsl_test::bitwise_equal;

namespace {

ComplexMatrix scalar_batch(Complex z)
{
    ComplexMatrix m(1, 1);
    m(0, 0) = z;
    return m;
}

/// Exhaustive nearest-level scan with the documented tie rules, written
/// independently of the two-candidate implementation.
double brute_force_snap(double x, const Constellation &c, double extreme)
{
    double best = c.level(0, extreme);
    double best_d = std::abs(x - best);
    for (std::size_t m = 1; m < c.levels; ++m) {
        const double lv = c.level(m, extreme);
        const double d = std::abs(x - lv);
        const bool better =
            d < best_d || (d == best_d && (std::abs(lv) < std::abs(best) ||
                                           (std::abs(lv) == std::abs(best) && lv > best)));
        if (better) {
            best = lv;
            best_d = d;
        }
    }
    return best;
}

} // namespace

TEST_CASE("qam_activate snaps to the documented levels")
{
    const Constellation c4(4, 1.0);
    const ComplexMatrix y = qam_activate(scalar_batch(Complex(0.2, 0.9)), c4);
    REQUIRE(y(0, 0).real() == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(y(0, 0).imag() == 1.0);

    const Constellation c2(2, 1.0);
    REQUIRE(qam_activate(scalar_batch(Complex(-0.1, 0.0)), c2)(0, 0).real() == -1.0);

    // 2/3 sits between 1/3 and 1; the smaller-magnitude side wins.
    REQUIRE(qam_activate(scalar_batch(Complex(2.0 / 3.0, 0.0)), c4)(0, 0).real() ==
            Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("qam tie rules at exact floating-point midpoints")
{
    const Constellation c2(2, 1.0);
    // 0 is equidistant from -1 and +1 with equal magnitudes: non-negative wins.
    REQUIRE(qam_activate(scalar_batch(Complex(0.0, 0.0)), c2)(0, 0).real() == 1.0);

    const Constellation c3(3, 1.0);
    // 0.5 is equidistant from 0 and 1: smaller magnitude wins.
    REQUIRE(qam_activate(scalar_batch(Complex(0.5, 0.0)), c3)(0, 0).real() == 0.0);
}

TEST_CASE("qam_activate matches the exhaustive scan on a dense grid")
{
    for (std::size_t levels : {std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
        for (double delta : {0.5, 1.0, 2.0}) {
            const Constellation c(levels, delta);
            for (int gi = 0; gi <= 100; ++gi) {
                const double x = -1.5 * delta + 3.0 * delta * gi / 100.0;
                ComplexMatrix in = scalar_batch(Complex(x, -x));
                const ComplexMatrix out = qam_activate(in, c);
                REQUIRE(out(0, 0).real() == brute_force_snap(x, c, c.delta_r));
                REQUIRE(out(0, 0).imag() == brute_force_snap(-x, c, c.delta_i));
            }
        }
    }
}

TEST_CASE("qam_activate is idempotent")
{
    const Constellation c(4, 1.0);
    Rng rng(3);
    ComplexMatrix x(8, 5);
    for (auto &z : x.data())
        z = Complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    const ComplexMatrix once = qam_activate(x, c);
    REQUIRE(bitwise_equal(qam_activate(once, c), once));
}

TEST_CASE("straight-through gate passes inside the extremes and zeroes outside")
{
    const Constellation c(4, 1.0);
    const ComplexMatrix g = scalar_batch(Complex(2.0, 3.0));

    REQUIRE(qam_backward(scalar_batch(Complex(0.5, 0.0)), g, c)(0, 0) == Complex(2.0, 3.0));
    REQUIRE(qam_backward(scalar_batch(Complex(1.7, 0.2)), g, c)(0, 0) == Complex(0.0, 3.0));
    REQUIRE(qam_backward(scalar_batch(Complex(5.0, -9.0)), g, c)(0, 0) == Complex(0.0, 0.0));

    REQUIRE_THROWS_AS(qam_backward(ComplexMatrix(2, 1), ComplexMatrix(3, 1), c),
                      std::invalid_argument);
}

TEST_CASE("straight-through gate never scales a component")
{
    const Constellation c(4, 1.0);
    Rng rng(9);
    ComplexMatrix x(6, 4), g(6, 4);
    for (auto &z : x.data())
        z = Complex(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
    for (auto &z : g.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const ComplexMatrix out = qam_backward(x, g, c);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double re = out.data()[i].real();
        const double im = out.data()[i].imag();
        REQUIRE((re == 0.0 || re == g.data()[i].real()));
        REQUIRE((im == 0.0 || im == g.data()[i].imag()));
    }
}

TEST_CASE("crelu clips components independently")
{
    REQUIRE(crelu(scalar_batch(Complex(-1.0, 2.0)))(0, 0) == Complex(0.0, 2.0));
    REQUIRE(crelu(scalar_batch(Complex(3.0, -4.0)))(0, 0) == Complex(3.0, 0.0));
    REQUIRE(crelu_backward(scalar_batch(Complex(3.0, -4.0)),
                           scalar_batch(Complex(1.0, 1.0)))(0, 0) == Complex(1.0, 0.0));
}

TEST_CASE("batchnorm constant batch collapses to the shift")
{
    BatchNorm bn(2);
    bn.shift()[0] = 0.25;  // real shift of feature 0
    bn.shift()[2] = -0.5;  // imag shift of feature 0
    ComplexMatrix x(2, 3);
    for (std::size_t b = 0; b < 3; ++b) {
        x(0, b) = Complex(7.0, -2.0);
        x(1, b) = Complex(0.0, 4.0);
    }
    const ComplexMatrix y = bn.forward(x, true);
    for (std::size_t b = 0; b < 3; ++b) {
        REQUIRE(y(0, b) == Complex(0.25, -0.5));
        REQUIRE(y(1, b) == Complex(0.0, 0.0));
    }
}

TEST_CASE("batchnorm normalizes to zero mean and unit variance")
{
    BatchNorm bn(3);
    Rng rng(11);
    ComplexMatrix x(3, 64);
    for (auto &z : x.data())
        z = Complex(rng.uniform(-4.0, 9.0), rng.uniform(-1.0, 1.0));
    const ComplexMatrix y = bn.forward(x, true);
    for (std::size_t f = 0; f < 3; ++f) {
        for (int comp = 0; comp < 2; ++comp) {
            double mean = 0.0;
            for (std::size_t b = 0; b < 64; ++b)
                mean += comp == 0 ? y(f, b).real() : y(f, b).imag();
            mean /= 64.0;
            double var = 0.0;
            for (std::size_t b = 0; b < 64; ++b) {
                const double v = (comp == 0 ? y(f, b).real() : y(f, b).imag()) - mean;
                var += v * v;
            }
            var /= 64.0;
            REQUIRE(std::abs(mean) <= 1e-10);
            REQUIRE(var == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("batchnorm rejects training batches of one")
{
    BatchNorm bn(2);
    REQUIRE_THROWS_AS(bn.forward(ComplexMatrix(2, 1), true), std::invalid_argument);
    REQUIRE_NOTHROW(bn.forward(ComplexMatrix(2, 1), false));
}

TEST_CASE("batchnorm normalized output is invariant under batch rescaling")
{
    Rng rng(13);
    ComplexMatrix x(4, 16);
    for (auto &z : x.data())
        z = Complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
    BatchNorm a(4), b(4);
    const ComplexMatrix ya = a.forward(x, true);
    for (double alpha : {0.5, 3.0, 250.0}) {
        const ComplexMatrix yb = b.forward(alpha * x, true);
        REQUIRE(max_abs_diff(ya, yb) <= 1e-8);
    }
}

TEST_CASE("batchnorm backward matches finite differences")
{
    Rng rng(17);
    ComplexMatrix x(4, 3);
    for (auto &z : x.data())
        z = Complex(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    ComplexMatrix y0(4, 3);
    for (auto &z : y0.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));

    BatchNorm bn(4);
    for (std::size_t i = 0; i < bn.scale().size(); ++i) {
        bn.scale()[i] = 1.0 + 0.1 * static_cast<double>(i % 3);
        bn.shift()[i] = 0.05 * static_cast<double>(i % 5);
    }

    auto loss_of = [&](BatchNorm &net, const ComplexMatrix &input) {
        const ComplexMatrix y = net.forward(input, true);
        const double n = frobenius_norm(y - y0);
        return 0.5 * n * n;
    };

    bn.forward(x, true);
    bn.zero_grads();
    const ComplexMatrix y = bn.forward(x, true);
    const ComplexMatrix g_in = bn.backward(y - y0);

    const double h = 1e-6;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int comp = 0; comp < 2; ++comp) {
            BatchNorm probe = bn;
            ComplexMatrix xp = x;
            const Complex dz = comp == 0 ? Complex(h, 0.0) : Complex(0.0, h);
            xp.data()[i] = x.data()[i] + dz;
            const double lp = loss_of(probe, xp);
            xp.data()[i] = x.data()[i] - dz;
            const double lm = loss_of(probe, xp);
            const double fd = (lp - lm) / (2.0 * h);
            const double an = comp == 0 ? g_in.data()[i].real() : g_in.data()[i].imag();
            max_rel = std::max(max_rel, std::abs(fd - an) / std::max(std::abs(fd), 1e-9));
        }
    }
    REQUIRE(max_rel <= 1e-4);

    for (std::size_t i = 0; i < bn.scale().size(); ++i) {
        BatchNorm probe = bn;
        probe.scale()[i] += h;
        const double lp = loss_of(probe, x);
        probe.scale()[i] -= 2.0 * h;
        const double lm = loss_of(probe, x);
        const double fd = (lp - lm) / (2.0 * h);
        REQUIRE(std::abs(fd - bn.scale_grad()[i]) <= 1e-4 * std::max(std::abs(fd), 1e-6));
    }
    for (std::size_t i = 0; i < bn.shift().size(); ++i) {
        BatchNorm probe = bn;
        probe.shift()[i] += h;
        const double lp = loss_of(probe, x);
        probe.shift()[i] -= 2.0 * h;
        const double lm = loss_of(probe, x);
        const double fd = (lp - lm) / (2.0 * h);
        REQUIRE(std::abs(fd - bn.shift_grad()[i]) <= 1e-4 * std::max(std::abs(fd), 1e-6));
    }
}

TEST_CASE("head_loss on uniform and saturated logits")
{
    ComplexMatrix uniform(5, 2);
    const HeadLossResult u = head_loss(uniform, {0, 3});
    REQUIRE(u.loss == Catch::Approx(std::log(5.0)).margin(1e-12));

    ComplexMatrix sat(4, 1);
    sat(2, 0) = Complex(30.0, 0.0);
    REQUIRE(head_loss(sat, {2}).loss <= 1e-9);

    REQUIRE_THROWS_AS(head_loss(sat, {7}), std::invalid_argument);
    REQUIRE_THROWS_AS(head_loss(sat, {0, 1}), std::invalid_argument);
}

TEST_CASE("head_loss gradient matches finite differences and stays real")
{
    Rng rng(19);
    ComplexMatrix z(3, 2);
    for (auto &v : z.data())
        v = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const std::vector<int> labels = {1, 0};
    const HeadLossResult res = head_loss(z, labels);

    const double h = 1e-6;
    for (std::size_t i = 0; i < z.size(); ++i) {
        ComplexMatrix zp = z;
        zp.data()[i] = z.data()[i] + Complex(h, 0.0);
        const double lp = head_loss(zp, labels).loss;
        zp.data()[i] = z.data()[i] - Complex(h, 0.0);
        const double lm = head_loss(zp, labels).loss;
        const double fd = (lp - lm) / (2.0 * h);
        REQUIRE(std::abs(fd - res.g_z.data()[i].real()) <= 1e-5 * std::max(std::abs(fd), 1.0));

        zp.data()[i] = z.data()[i] + Complex(0.0, h);
        const double lpi = head_loss(zp, labels).loss;
        zp.data()[i] = z.data()[i] - Complex(0.0, h);
        const double lmi = head_loss(zp, labels).loss;
        REQUIRE(std::abs((lpi - lmi) / (2.0 * h)) <= 1e-9);
        REQUIRE(res.g_z.data()[i].imag() == 0.0);
    }
}

TEST_CASE("adam first step has magnitude close to the learning rate")
{
    std::vector<double> value = {2.0};
    std::vector<double> grad = {0.37};
    std::vector<ParamRef> params;
    add_param(params, "p", value, grad);
    Adam opt(0.005);
    opt.step(params);
    REQUIRE(std::abs(2.0 - value[0]) == Catch::Approx(0.005).epsilon(1e-4));
}

TEST_CASE("adam leaves parameters alone under zero gradients")
{
    std::vector<double> value = {1.5, -0.5};
    std::vector<double> grad = {0.0, 0.0};
    std::vector<ParamRef> params;
    add_param(params, "p", value, grad);
    Adam opt(0.1);
    for (int i = 0; i < 25; ++i)
        opt.step(params);
    REQUIRE(value[0] == 1.5);
    REQUIRE(value[1] == -0.5);
}

TEST_CASE("adam three-step trace matches a hand-rolled scalar reference")
{
    const double lr = 0.01, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const std::vector<double> gs = {0.3, -0.7, 0.2};

    double expected = 1.3, m = 0.0, v = 0.0;
    for (std::size_t t = 1; t <= gs.size(); ++t) {
        const double g = gs[t - 1];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double mh = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        expected -= lr * mh / (std::sqrt(vh) + eps);
    }

    std::vector<double> value = {1.3};
    std::vector<double> grad = {0.0};
    std::vector<ParamRef> params;
    add_param(params, "p", value, grad);
    Adam opt(lr);
    for (double g : gs) {
        grad[0] = g;
        opt.step(params);
    }
    REQUIRE(std::abs(value[0] - expected) <= 1e-12);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter")
{
    std::vector<double> value = {1.0};
    std::vector<double> grad = {std::numeric_limits<double>::quiet_NaN()};
    std::vector<ParamRef> params;
    add_param(params, "layer.weight", value, grad);
    Adam opt(0.01);
    REQUIRE_THROWS_WITH(opt.step(params), Catch::Matchers::ContainsSubstring("layer.weight"));
    REQUIRE(value[0] == 1.0);
}

// ---------------------------------------------------------------------------
// Model graph
// ---------------------------------------------------------------------------

namespace {

ModelSpec small_spec(bool with_qam)
{
    ModelSpec spec;
    LayerDesc oac;
    oac.kind = LayerKind::OacLinear;
    oac.out = 8;
    spec.layers.push_back(oac);
    LayerDesc act;
    act.kind = LayerKind::CRelu;
    spec.layers.push_back(act);
    if (with_qam) {
        LayerDesc qam;
        qam.kind = LayerKind::Qam;
        qam.constellation = Constellation(4, 1.0);
        spec.layers.push_back(qam);
    }
    LayerDesc head;
    head.kind = LayerKind::Dense;
    head.out = 3;
    spec.layers.push_back(head);
    return spec;
}

MimoParams small_mimo()
{
    MimoParams mimo;
    mimo.n_t = 4;
    mimo.n_r = 4;
    mimo.r = 2;
    return mimo;
}

} // namespace

TEST_CASE("end-to-end model gradient matches finite differences")
{
    ModelSpec spec;
    LayerDesc oac;
    oac.kind = LayerKind::OacLinear;
    oac.out = 4;
    spec.layers.push_back(oac);
    LayerDesc act;
    act.kind = LayerKind::CRelu;
    spec.layers.push_back(act);
    LayerDesc head;
    head.kind = LayerKind::Dense;
    head.out = 3;
    spec.layers.push_back(head);

    Model model(spec, small_mimo(), {4}, 2024);
    model.set_noise_variance(0.0);

    Rng rng(5);
    ComplexMatrix batch(4, 2);
    for (auto &z : batch.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const std::vector<int> labels = {2, 0};

    auto loss_now = [&]() {
        const ComplexMatrix z = model.forward(batch, true);
        return head_loss(z, labels).loss;
    };

    const ComplexMatrix z = model.forward(batch, true);
    const HeadLossResult head_res = head_loss(z, labels);
    model.zero_grads();
    model.backward(head_res.g_z);

    const double h = 1e-5;
    for (const ParamRef &p : model.params()) {
        double max_fd = 0.0, max_diff = 0.0;
        for (std::size_t i = 0; i < p.count; ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double lp = loss_now();
            p.value[i] = saved - h;
            const double lm = loss_now();
            p.value[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            max_fd = std::max(max_fd, std::abs(fd));
            max_diff = std::max(max_diff, std::abs(fd - p.grad[i]));
        }
        INFO(p.name);
        REQUIRE(max_diff / std::max(max_fd, 1e-10) <= 1e-4);
    }
}

TEST_CASE("a zero-initialized residual block is the identity")
{
    ModelSpec spec;
    LayerDesc res;
    res.kind = LayerKind::Residual;
    LayerDesc inner;
    inner.kind = LayerKind::Dense;
    inner.out = 4;
    res.inner.push_back(inner);
    spec.layers.push_back(res);

    Model model(spec, small_mimo(), {4}, 7);
    for (const ParamRef &p : model.params())
        for (std::size_t i = 0; i < p.count; ++i)
            p.value[i] = 0.0;

    Rng rng(31);
    ComplexMatrix batch(4, 3);
    for (auto &z : batch.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    REQUIRE(bitwise_equal(model.forward(batch, false), batch));
}

TEST_CASE("residual blocks must preserve the shape")
{
    ModelSpec spec;
    LayerDesc res;
    res.kind = LayerKind::Residual;
    LayerDesc inner;
    inner.kind = LayerKind::Dense;
    inner.out = 5;
    res.inner.push_back(inner);
    spec.layers.push_back(res);
    REQUIRE_THROWS_AS(Model(spec, small_mimo(), {4}, 7), std::invalid_argument);
}

TEST_CASE("inserting a parameterless quantizer leaves all other state untouched")
{
    const MimoParams mimo = small_mimo();
    Model with_qam(small_spec(true), mimo, {6}, 99);
    Model without(small_spec(false), mimo, {6}, 99);

    const auto pa = with_qam.params();
    const auto pb = without.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].count == pb[i].count);
        for (std::size_t j = 0; j < pa[i].count; ++j)
            REQUIRE(pa[i].value[j] == pb[i].value[j]);
    }

    std::vector<ComplexMatrix> ha, hb;
    with_qam.for_each_oac([&](OacCore &c) { ha.push_back(c.channel.h()); });
    without.for_each_oac([&](OacCore &c) { hb.push_back(c.channel.h()); });
    REQUIRE(ha.size() == 1);
    REQUIRE(hb.size() == 1);
    REQUIRE(bitwise_equal(ha[0], hb[0]));
}

TEST_CASE("model rebuild reproduces forward outputs bit for bit")
{
    const MimoParams mimo = small_mimo();
    Rng rng(41);
    ComplexMatrix batch(6, 4);
    for (auto &z : batch.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));

    Model a(small_spec(false), mimo, {6}, 1234);
    Model b(small_spec(false), mimo, {6}, 1234);
    REQUIRE(bitwise_equal(a.forward(batch, false), b.forward(batch, false)));
}

TEST_CASE("oac conv layer gradient matches finite differences")
{
    ModelSpec spec;
    LayerDesc conv;
    conv.kind = LayerKind::OacConv;
    conv.out_channels = 2;
    conv.kernel_h = 2;
    conv.kernel_w = 2;
    conv.padding = 0;
    conv.stride = 1;
    spec.layers.push_back(conv);
    LayerDesc head;
    head.kind = LayerKind::Dense;
    head.out = 2;
    spec.layers.push_back(head);

    MimoParams mimo = small_mimo();
    Model model(spec, mimo, {2, 3, 3}, 5150);
    model.set_noise_variance(0.0);

    Rng rng(8);
    ComplexMatrix batch(2 * 3 * 3, 2);
    for (auto &z : batch.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const std::vector<int> labels = {0, 1};

    auto loss_now = [&]() {
        return head_loss(model.forward(batch, true), labels).loss;
    };
    const HeadLossResult head_res = head_loss(model.forward(batch, true), labels);
    model.zero_grads();
    model.backward(head_res.g_z);

    const double h = 1e-5;
    for (const ParamRef &p : model.params()) {
        double max_fd = 0.0, max_diff = 0.0;
        for (std::size_t i = 0; i < p.count; ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double lp = loss_now();
            p.value[i] = saved - h;
            const double lm = loss_now();
            p.value[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            max_fd = std::max(max_fd, std::abs(fd));
            max_diff = std::max(max_diff, std::abs(fd - p.grad[i]));
        }
        INFO(p.name);
        REQUIRE(max_diff / std::max(max_fd, 1e-10) <= 1e-4);
    }
}

TEST_CASE("local conv layer gradient matches finite differences")
{
    ModelSpec spec;
    LayerDesc conv;
    conv.kind = LayerKind::Conv;
    conv.out_channels = 2;
    conv.kernel_h = 3;
    conv.kernel_w = 3;
    conv.padding = 1;
    conv.stride = 1;
    spec.layers.push_back(conv);
    LayerDesc head;
    head.kind = LayerKind::Dense;
    head.out = 2;
    spec.layers.push_back(head);

    Model model(spec, small_mimo(), {1, 3, 3}, 31337);

    Rng rng(12);
    ComplexMatrix batch(9, 2);
    for (auto &z : batch.data())
        z = Complex(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const std::vector<int> labels = {1, 0};

    auto loss_now = [&]() {
        return head_loss(model.forward(batch, true), labels).loss;
    };
    const HeadLossResult head_res = head_loss(model.forward(batch, true), labels);
    model.zero_grads();
    model.backward(head_res.g_z);

    const double h = 1e-5;
    for (const ParamRef &p : model.params()) {
        double max_fd = 0.0, max_diff = 0.0;
        for (std::size_t i = 0; i < p.count; ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double lp = loss_now();
            p.value[i] = saved - h;
            const double lm = loss_now();
            p.value[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            max_fd = std::max(max_fd, std::abs(fd));
            max_diff = std::max(max_diff, std::abs(fd - p.grad[i]));
        }
        INFO(p.name);
        REQUIRE(max_diff / std::max(max_fd, 1e-10) <= 1e-4);
    }
}
