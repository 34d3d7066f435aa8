#include <cmath>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "mssdepth/ops.hpp"
#include "mssdepth/optim.hpp"
#include "mssdepth/serialize.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mss;
using support::error_kind;

namespace {

using Builder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Backpropagates sum(f(inputs) * w) for a random w and returns the worst
// relative finite-difference error over every input element.
double op_grad_error(std::vector<Tensor> inputs, const Builder& f, oracle::Gen& gen) {
    Tape tape;
    const Tensor out = f(tape, inputs);
    const Tensor w = gen.tensor(out.shape());
    tape.backward(sum(tape, mul(tape, out, w)));
    auto eval = [&] {
        Tape t(false);
        return sum(t, mul(t, f(t, inputs), w)).item();
    };
    double worst = 0.0;
    for (auto& in : inputs) worst = std::max(worst, oracle::gradient_error(in, eval));
    return worst;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

} // namespace

TEST_CASE("tensor construction keeps shape and data consistent") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.data().size() == 6);
    CHECK(shape_str(t.shape()) == "[2,3]");
    CHECK_FALSE(t.has_grad());
    CHECK(error_kind([] { Tensor({2, 2}, std::vector<double>(3)); }).has_value());
    Tensor a = Tensor::full({2}, 1.5);
    Tensor b = a;
    CHECK(b.same_storage(a));
    Tensor c = a.clone();
    c.mutable_data()[0] = 7.0;
    CHECK(a.data()[0] == 1.5);
}

TEST_CASE("conv2d spec examples") {
    Tape tape(false);
    SUBCASE("box filter counts neighbours") {
        const Tensor in = Tensor::full({1, 3, 3}, 1.0);
        const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
        const Tensor out = conv2d(tape, in, w, {1, 1});
        CHECK(out.shape() == Shape{1, 3, 3});
        CHECK(out.at({0, 1, 1}) == 9.0);
        CHECK(out.at({0, 0, 0}) == 4.0);
        CHECK(out.at({0, 2, 2}) == 4.0);
        CHECK(out.at({0, 0, 1}) == 6.0);
    }
    SUBCASE("1x1 kernel scales") {
        const Tensor in({1, 2, 2}, {1, 2, 3, 4});
        const Tensor w({1, 1, 1, 1}, std::vector<double>{2});
        CHECK(values(conv2d(tape, in, w)) == std::vector<double>{2, 4, 6, 8});
    }
    SUBCASE("strided conv matches the loop oracle") {
        oracle::Gen gen(11);
        const Tensor in = gen.tensor({4, 8, 8});
        const Tensor w = gen.tensor({6, 4, 3, 3});
        const Tensor out = conv2d(tape, in, w, {2, 1});
        CHECK(out.shape() == Shape{6, 4, 4});
        std::size_t oh = 0, ow = 0;
        const auto ref = oracle::conv2d(values(in), 4, 8, 8, values(w), 6, 3, 2, 1, oh, ow);
        CHECK(oracle::max_rel_diff(out.data(), ref) < 1e-12);
    }
}

TEST_CASE("conv2d agrees with the loop oracle across shapes") {
    oracle::Gen gen(5);
    Tape tape(false);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t ci = gen.range(1, 4), co = gen.range(1, 4);
        const std::size_t k = 2 * gen.range(0, 2) + 1;
        const std::size_t stride = gen.range(1, 3), pad = gen.range(0, k / 2 + 1);
        const std::size_t h = gen.range(k, 9), w = gen.range(k, 9);
        const Tensor in = gen.tensor({ci, h, w});
        const Tensor wt = gen.tensor({co, ci, k, k});
        const Tensor out = conv2d(tape, in, wt, {stride, pad});
        std::size_t oh = 0, ow = 0;
        const auto ref = oracle::conv2d(values(in), ci, h, w, values(wt), co, k, stride, pad, oh, ow);
        REQUIRE(out.shape() == Shape{co, oh, ow});
        CHECK(oracle::max_rel_diff(out.data(), ref) < 1e-12);
    }
}

TEST_CASE("conv2d shares weights over a leading frame axis and adds bias") {
    oracle::Gen gen(6);
    Tape tape(false);
    const Tensor in = gen.tensor({3, 2, 5, 5});
    const Tensor w = gen.tensor({4, 2, 3, 3});
    const Tensor b = gen.tensor({4});
    const Tensor out = conv2d(tape, in, w, {1, 1}, b);
    REQUIRE(out.shape() == Shape{3, 4, 5, 5});
    for (std::size_t f = 0; f < 3; ++f) {
        const Tensor frame = conv2d(tape, select(tape, in, f), w, {1, 1});
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x)
                    CHECK(out.at({f, c, y, x}) == doctest::Approx(frame.at({c, y, x}) + b.data()[c]).epsilon(1e-14));
    }
}

TEST_CASE("conv2d rejects bad shapes") {
    Tape tape(false);
    const Tensor in({2, 4, 4});
    CHECK(error_kind([&] { conv2d(tape, in, Tensor({1, 3, 3, 3})); }) == ErrorKind::dimension);
    CHECK(error_kind([&] { conv2d(tape, in, Tensor({1, 2, 2, 2})); }).has_value());
    CHECK(error_kind([&] { conv2d(tape, in, Tensor({1, 2, 3, 3}), {1, 1}, Tensor({2})); }) == ErrorKind::dimension);
    const auto msg = support::error_message([&] { conv2d(tape, in, Tensor({1, 3, 3, 3})); });
    CHECK(msg.find("axis 1") != std::string::npos);
}

TEST_CASE("nearest_upsample") {
    Tape tape;
    const Tensor in({1, 2, 2}, {1, 2, 3, 4});
    CHECK(values(nearest_upsample(tape, in, 2)) ==
          std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    CHECK(values(nearest_upsample(tape, in, 1)) == values(in));
    CHECK(error_kind([&] { nearest_upsample(tape, in, 0); }) == ErrorKind::argument);

    oracle::Gen gen(3);
    Tensor x = gen.tensor({2, 3, 3}, -1, 1, true);
    const Tensor up = nearest_upsample(tape, x, 3);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 9; ++y)
            for (std::size_t xx = 0; xx < 9; ++xx) CHECK(up.at({c, y, xx}) == x.at({c, y / 3, xx / 3}));
    tape.backward(sum(tape, up));
    for (double g : x.grad()) CHECK(g == 9.0);
}

TEST_CASE("upsample then average pooling per block is the identity") {
    oracle::Gen gen(8);
    Tape tape(false);
    for (std::size_t factor = 1; factor <= 4; ++factor) {
        const Tensor x = gen.tensor({2, 3, 4});
        const Tensor up = nearest_upsample(tape, x, factor);
        // Block-average with a factor x factor box conv at stride factor.
        const Tensor box = Tensor::full({1, 1, factor, factor}, 1.0 / static_cast<double>(factor * factor));
        if (factor % 2 == 0) {
            // Even kernels are not supported by conv2d; average by hand.
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t y = 0; y < 3; ++y)
                    for (std::size_t xx = 0; xx < 4; ++xx) {
                        double acc = 0.0;
                        for (std::size_t dy = 0; dy < factor; ++dy)
                            for (std::size_t dx = 0; dx < factor; ++dx)
                                acc += up.at({c, y * factor + dy, xx * factor + dx});
                        CHECK(acc / static_cast<double>(factor * factor) == doctest::Approx(x.at({c, y, xx})).epsilon(1e-15));
                    }
        } else {
            const Tensor frames = reshape(tape, up, {2, 1, 3 * factor, 4 * factor});
            const Tensor pooled = conv2d(tape, frames, box, {factor, 0});
            CHECK(oracle::max_rel_diff(pooled.data(), x.data()) < 1e-14);
        }
    }
}

TEST_CASE("pool") {
    Tape tape;
    const Tensor x({2, 2}, {1, 2, 3, 4});
    CHECK(pool(tape, x, {0, 1}, PoolMode::avg).item() == 2.5);
    CHECK(pool(tape, x, {0, 1}, PoolMode::max).item() == 4.0);
    CHECK(values(pool(tape, x, {1}, PoolMode::avg)) == std::vector<double>{1.5, 3.5});
    CHECK(values(pool(tape, x, {0}, PoolMode::max)) == std::vector<double>{3, 4});

    Tensor tie({1, 2}, {5, 5}, true);
    tape.backward(pool(tape, tie, {0, 1}, PoolMode::max));
    CHECK(tie.grad()[0] == 1.0);
    CHECK(tie.grad()[1] == 0.0);

    CHECK(error_kind([&] { pool(tape, x, {2}, PoolMode::avg); }) == ErrorKind::argument);
    CHECK(error_kind([&] { pool(tape, x, {}, PoolMode::avg); }) == ErrorKind::argument);
}

TEST_CASE("linear") {
    Tape tape(false);
    oracle::Gen gen(4);
    const Tensor v = gen.tensor({3});
    const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(values(linear(tape, v, eye, Tensor::zeros({3}))) == values(v));
    const Tensor zero_out = linear(tape, v, Tensor::zeros({2, 3}));
    for (double o : zero_out.data()) CHECK(o == 0.0);

    const Tensor w = gen.tensor({3, 5});
    const Tensor in = gen.tensor({5});
    const Tensor out = linear(tape, in, w);
    for (std::size_t m = 0; m < 3; ++m) {
        double dot = 0.0;
        for (std::size_t n = 0; n < 5; ++n) dot += w.at({m, n}) * in.data()[n];
        CHECK(std::abs(out.data()[m] - dot) < 1e-14);
    }
    CHECK(error_kind([&] { linear(tape, gen.tensor({4}), w); }) == ErrorKind::dimension);
}

TEST_CASE("sigmoid") {
    Tape tape;
    CHECK(sigmoid(tape, Tensor::scalar(0.0)).item() == 0.5);
    const Tensor sat = sigmoid(tape, Tensor({2}, {50.0, -50.0}));
    CHECK(sat.data()[0] == doctest::Approx(1.0));
    CHECK(sat.data()[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(sat.data()[1]));
    CHECK(sat.data()[1] > 0.0);
    CHECK(sigmoid(tape, Tensor::scalar(-800.0)).item() >= 0.0);

    Tensor z = Tensor::scalar(0.0, true);
    tape.backward(sum(tape, sigmoid(tape, z)));
    CHECK(z.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
    const double eps = 1e-5;
    Tape t(false);
    const double fd = (sigmoid(t, Tensor::scalar(eps)).item() - sigmoid(t, Tensor::scalar(-eps)).item()) / (2 * eps);
    CHECK(std::abs(fd - 0.25) < 1e-10);
}

TEST_CASE("broadcast add, mul and concat") {
    Tape tape(false);
    oracle::Gen gen(9);
    const Tensor x = gen.tensor({1, 2, 2, 2});
    const Tensor half = mul(tape, x, Tensor({1}, std::vector<double>{0.5}));
    for (std::size_t i = 0; i < 8; ++i) CHECK(half.data()[i] == x.data()[i] * 0.5);
    CHECK(values(add(tape, x, Tensor::zeros({1, 2, 2, 2}))) == values(x));

    const Tensor a = gen.tensor({5, 2, 3, 3}), b = gen.tensor({5, 2, 3, 3});
    const Tensor c = concat(tape, a, b, 1);
    CHECK(c.shape() == Shape{5, 4, 3, 3});
    CHECK(c.at({4, 3, 2, 2}) == b.at({4, 1, 2, 2}));
    CHECK(c.at({0, 1, 0, 0}) == a.at({0, 1, 0, 0}));

    const Tensor gate = gen.tensor({5, 2});
    const Tensor gated = mul(tape, a, gate);
    CHECK(gated.at({3, 1, 2, 0}) == a.at({3, 1, 2, 0}) * gate.at({3, 1}));
    CHECK(error_kind([&] { add(tape, a, gen.tensor({3})); }) == ErrorKind::dimension);
    CHECK(error_kind([&] { concat(tape, a, gen.tensor({5, 2, 3, 4}), 1); }) == ErrorKind::dimension);
}

TEST_CASE("backward basics") {
    SUBCASE("sum") {
        Tape tape;
        Tensor x({3}, {1, 2, 3}, true);
        tape.backward(sum(tape, x));
        CHECK(values(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{1, 1, 1});
    }
    SUBCASE("sum of squares") {
        Tape tape;
        Tensor x({2}, {1, 2}, true);
        tape.backward(sum(tape, mul(tape, x, x)));
        CHECK(x.grad()[0] == 2.0);
        CHECK(x.grad()[1] == 4.0);
    }
    SUBCASE("repeated backward accumulates") {
        Tape tape;
        Tensor x({2}, {1, 2}, true);
        const Tensor loss = sum(tape, scale(tape, x, 3.0));
        tape.backward(loss);
        tape.backward(loss);
        CHECK(x.grad()[0] == 6.0);
        x.zero_grad();
        CHECK(x.grad()[0] == 0.0);
    }
    SUBCASE("empty tape and non-scalar loss") {
        Tape tape;
        CHECK(tape.empty());
        Tensor x = Tensor::scalar(1.0, true);
        tape.backward(x);
        CHECK(error_kind([&] { tape.backward(Tensor({2})); }) == ErrorKind::argument);
    }
    SUBCASE("composite conv, sigmoid, sum") {
        oracle::Gen gen(21);
        Tensor in = gen.tensor({2, 5, 5}, -1, 1, true);
        Tensor w = gen.tensor({3, 2, 3, 3}, -1, 1, true);
        auto f = [&](Tape& t) { return sum(t, sigmoid(t, conv2d(t, in, w, {1, 1}))); };
        Tape tape;
        tape.backward(f(tape));
        auto eval = [&] {
            Tape t(false);
            return f(t).item();
        };
        CHECK(oracle::gradient_error(in, eval) < 1e-6);
        CHECK(oracle::gradient_error(w, eval) < 1e-6);
    }
}

TEST_CASE("backward is linear in the loss") {
    oracle::Gen gen(13);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = gen.tensor({4}, -1, 1, true);
        const double a = gen.uniform(-2, 2), b = gen.uniform(-2, 2);
        auto f = [&](Tape& t) { return sum(t, sigmoid(t, x)); };
        auto g = [&](Tape& t) { return sum(t, mul(t, x, x)); };
        Tape t1;
        t1.backward(f(t1));
        const std::vector<double> gf(x.grad().begin(), x.grad().end());
        x.zero_grad();
        Tape t2;
        t2.backward(g(t2));
        const std::vector<double> gg(x.grad().begin(), x.grad().end());
        x.zero_grad();
        Tape t3;
        t3.backward(add(t3, scale(t3, f(t3), a), scale(t3, g(t3), b)));
        for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-13));
    }
}

TEST_CASE("every differentiable op passes finite differences over 20 seeds") {
    const double tol = 1e-6;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        oracle::Gen gen(1000 + seed);
        auto t = [&](Shape s) { return gen.tensor(std::move(s), -1, 1, true); };
        CAPTURE(seed);
        CHECK(op_grad_error({t({2, 6, 5}), t({3, 2, 3, 3})},
                            [](Tape& tp, const auto& in) { return conv2d(tp, in[0], in[1], {2, 1}); }, gen) < tol);
        CHECK(op_grad_error({t({2, 2, 4, 4}), t({2, 2, 1, 1}), t({2})},
                            [](Tape& tp, const auto& in) { return conv2d(tp, in[0], in[1], {1, 0}, in[2]); }, gen) < tol);
        CHECK(op_grad_error({t({2, 2, 3})},
                            [](Tape& tp, const auto& in) { return nearest_upsample(tp, in[0], 2); }, gen) < tol);
        CHECK(op_grad_error({t({3, 2, 4})},
                            [](Tape& tp, const auto& in) { return pool(tp, in[0], {1, 2}, PoolMode::avg); }, gen) < tol);
        CHECK(op_grad_error({t({3, 2, 4})},
                            [](Tape& tp, const auto& in) { return pool(tp, in[0], {0, 2}, PoolMode::max); }, gen) < tol);
        CHECK(op_grad_error({t({5}), t({3, 5}), t({3})},
                            [](Tape& tp, const auto& in) { return linear(tp, in[0], in[1], in[2]); }, gen) < tol);
        CHECK(op_grad_error({t({4, 5}), t({3, 5})},
                            [](Tape& tp, const auto& in) { return linear(tp, in[0], in[1]); }, gen) < tol);
        CHECK(op_grad_error({t({3, 4})}, [](Tape& tp, const auto& in) { return sigmoid(tp, in[0]); }, gen) < tol);
        CHECK(op_grad_error({t({3, 4})}, [](Tape& tp, const auto& in) { return relu(tp, in[0]); }, gen) < tol);
        CHECK(op_grad_error({t({2, 3, 2, 2}), t({2, 3})},
                            [](Tape& tp, const auto& in) { return add(tp, in[0], in[1]); }, gen) < tol);
        CHECK(op_grad_error({t({2, 3, 2, 2}), t({2, 1, 2, 2})},
                            [](Tape& tp, const auto& in) { return sub(tp, in[0], in[1]); }, gen) < tol);
        CHECK(op_grad_error({t({2, 3, 2, 2}), t({2})},
                            [](Tape& tp, const auto& in) { return mul(tp, in[0], in[1]); }, gen) < tol);
        CHECK(op_grad_error({t({3, 2})}, [](Tape& tp, const auto& in) { return scale(tp, in[0], -1.7); }, gen) < tol);
        CHECK(op_grad_error({t({2, 1, 3}), t({2, 2, 3})},
                            [](Tape& tp, const auto& in) { return concat(tp, in[0], in[1], 1); }, gen) < tol);
        CHECK(op_grad_error({t({2, 6})},
                            [](Tape& tp, const auto& in) { return reshape(tp, in[0], {3, 4}); }, gen) < tol);
        CHECK(op_grad_error({t({4, 3})}, [](Tape& tp, const auto& in) { return sum(tp, in[0]); }, gen) < tol);
        CHECK(op_grad_error({t({2, 5, 6})},
                            [](Tape& tp, const auto& in) { return crop2d(tp, in[0], 3, 4); }, gen) < tol);
        CHECK(op_grad_error({t({3, 2, 2})}, [](Tape& tp, const auto& in) { return select(tp, in[0], 1); }, gen) < tol);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step moves by about lr") {
        ParamStore ps;
        Tensor& p = ps.add("p", Tensor::scalar(0.0, true));
        ps.zero_grad();
        p.grad_buffer()[0] = 1.0;
        adam_step(ps, {});
        // m_hat = 1, v_hat = 1, so the update is lr / (1 + eps).
        CHECK(p.item() == doctest::Approx(-0.002 / (1.0 + 1e-8)).epsilon(1e-15));
        CHECK(ps.adam_steps() == 1);
    }
    SUBCASE("zero gradient leaves the parameter unchanged") {
        ParamStore ps;
        Tensor& p = ps.add("p", Tensor({2}, {0.3, -0.4}, true));
        ps.zero_grad();
        adam_step(ps, {});
        CHECK(p.data()[0] == 0.3);
        CHECK(p.data()[1] == -0.4);
    }
    SUBCASE("constant gradient shrinks monotonically") {
        ParamStore ps;
        Tensor& p = ps.add("p", Tensor::scalar(1.0, true));
        double prev = p.item();
        for (int i = 0; i < 3; ++i) {
            ps.zero_grad();
            p.grad_buffer()[0] = 0.5;
            adam_step(ps, {});
            CHECK(p.item() < prev);
            prev = p.item();
        }
    }
    SUBCASE("missing gradient is a state error") {
        ParamStore ps;
        ps.add("w", Tensor({2}, true));
        CHECK(error_kind([&] { adam_step(ps, {}); }) == ErrorKind::state);
    }
    SUBCASE("parameter store bookkeeping") {
        ParamStore ps;
        ps.add("a", Tensor({2, 3}, true));
        ps.add("b", Tensor({4}, true));
        CHECK(ps.count() == 10);
        CHECK(ps.contains("a"));
        CHECK_FALSE(ps.contains("c"));
        CHECK(ps.entries()[1].name == "b");
    }
}

TEST_CASE("tensor and checkpoint serialisation") {
    oracle::Gen gen(2);
    const Tensor t = gen.tensor({2, 3, 4}, -1e300, 1e300);
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 8) == "SPKT0001");
    CHECK(bytes.size() == 8 + 4 + 3 * 4 + 24 * 8);
    // rank and first dim, little-endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);
    CHECK(static_cast<unsigned char>(bytes[12]) == 2);
    const Tensor back = read_tensor(ss);
    CHECK(back.shape() == t.shape());
    CHECK(std::equal(back.data().begin(), back.data().end(), t.data().begin()));

    std::stringstream bad("SPKX0001");
    CHECK(error_kind([&] { read_tensor(bad); }) == ErrorKind::parse);
    std::stringstream truncated(bytes.substr(0, 20));
    CHECK(error_kind([&] { read_tensor(truncated); }) == ErrorKind::parse);

    const auto dir = support::scratch_dir("serialize");
    const NamedTensors entries{{"alpha", t}, {"beta/gamma", Tensor::scalar(std::nan(""))}};
    save_checkpoint((dir / "c.spkc").string(), entries);
    CHECK(support::read_file(dir / "c.spkc").substr(0, 8) == "SPKC0001");
    const auto loaded = load_checkpoint((dir / "c.spkc").string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].first == "alpha");
    CHECK(loaded[1].first == "beta/gamma");
    CHECK(std::isnan(loaded[1].second.item()));
    std::stringstream again;
    write_checkpoint(again, loaded);
    CHECK(again.str() == support::read_file(dir / "c.spkc"));
    const auto msg = support::error_message([&] { load_checkpoint((dir / "missing.spkc").string()); });
    CHECK(msg.find("missing.spkc") != std::string::npos);
}
