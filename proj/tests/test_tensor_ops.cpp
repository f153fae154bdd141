#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pan/ops.hpp"

using namespace pan;

namespace {

TensorPtr tensor_from(Shape4 s, std::initializer_list<float> values) {
    auto t = make_tensor<float>(s);
    REQUIRE(std::size_t(s.numel()) == values.size());
    std::copy(values.begin(), values.end(), t->data.begin());
    return t;
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
    Tape tape;
    auto in = tensor_from({1, 1, 2, 2}, {1, 2, 3, 4});
    auto w = tensor_from({1, 1, 1, 1}, {1});
    auto out = conv2d<float>(tape, in, w, nullptr);
    CHECK(out->shape == Shape4{1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(out->data[i] == in->data[i]);
}

TEST_CASE("conv2d zero padding arithmetic") {
    Tape tape;
    auto in = make_tensor<float>({1, 1, 3, 3}, 1.0f);
    auto w = make_tensor<float>({1, 1, 3, 3}, 1.0f);
    auto out = conv2d<float>(tape, in, w, nullptr);
    CHECK(out->at(0, 0, 1, 1) == 9.0f);
    CHECK(out->at(0, 0, 0, 0) == 4.0f);
    CHECK(out->at(0, 0, 0, 2) == 4.0f);
    CHECK(out->at(0, 0, 2, 0) == 4.0f);
    CHECK(out->at(0, 0, 2, 2) == 4.0f);
    CHECK(out->at(0, 0, 0, 1) == 6.0f);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    std::mt19937_64 rng(11);
    auto in = make_tensor<float>({2, 3, 5, 4});
    auto w = make_tensor<float>({4, 3, 3, 3});
    auto b = make_tensor<float>({4, 1, 1, 1});
    fill_uniform(*in, rng, -1.0f, 1.0f);
    fill_uniform(*w, rng, -1.0f, 1.0f);
    fill_uniform(*b, rng, -1.0f, 1.0f);
    Tape tape;
    auto out = conv2d<float>(tape, in, w, b);
    auto ref = oracle::conv2d(*in, *w, b->data.data(), 1);
    for (std::size_t i = 0; i < out->data.size(); ++i)
        CHECK(out->data[i] == doctest::Approx(ref.data[i]).epsilon(1e-5));
}

TEST_CASE("conv2d linearity for bias-free layers") {
    std::mt19937_64 rng(5);
    auto a = make_tensor<float>({1, 2, 6, 6});
    auto b = make_tensor<float>({1, 2, 6, 6});
    auto w = make_tensor<float>({3, 2, 3, 3});
    fill_uniform(*a, rng, -1.0f, 1.0f);
    fill_uniform(*b, rng, -1.0f, 1.0f);
    fill_uniform(*w, rng, -1.0f, 1.0f);
    const float alpha = 0.7f, beta = -1.3f;
    auto mix = make_tensor<float>(a->shape);
    for (std::size_t i = 0; i < mix->data.size(); ++i)
        mix->data[i] = alpha * a->data[i] + beta * b->data[i];
    Tape tape;
    auto lhs = conv2d<float>(tape, mix, w, nullptr);
    auto ca = conv2d<float>(tape, a, w, nullptr);
    auto cb = conv2d<float>(tape, b, w, nullptr);
    for (std::size_t i = 0; i < lhs->data.size(); ++i)
        CHECK(lhs->data[i] ==
              doctest::Approx(alpha * ca->data[i] + beta * cb->data[i]).epsilon(1e-4));
}

TEST_CASE("conv2d rejects bad configurations") {
    Tape tape;
    auto in = make_tensor<float>({1, 2, 4, 4});
    CHECK_THROWS_AS(conv2d<float>(tape, in, make_tensor<float>({1, 2, 2, 2}), nullptr),
                    UnsupportedError);
    CHECK_THROWS_AS(conv2d<float>(tape, in, make_tensor<float>({1, 2, 3, 3}), nullptr, 2),
                    UnsupportedError);
    CHECK_THROWS_AS(conv2d<float>(tape, in, make_tensor<float>({1, 3, 3, 3}), nullptr),
                    ShapeError);
    CHECK_THROWS_AS(
        conv2d<float>(tape, in, make_tensor<float>({2, 2, 1, 1}), make_tensor<float>({3, 1, 1, 1})),
        ShapeError);
}

TEST_CASE("sigmoid values and saturation") {
    Tape tape;
    auto x = tensor_from({1, 1, 1, 3}, {0.0f, -100.0f, 100.0f});
    auto y = sigmoid<float>(tape, x);
    CHECK(y->data[0] == 0.5f);
    CHECK(y->data[1] > 0.0f);
    CHECK(y->data[1] <= 1e-40f);
    CHECK(std::isfinite(y->data[1]));
    CHECK(y->data[2] < 1.0f);
    CHECK(y->data[2] > 0.999999f);
}

TEST_CASE("sigmoid gradient at zero is 0.25") {
    // Central difference oracle, step 1e-3, in double.
    TapeT<double> tape;
    auto x = make_tensor<double>({1, 1, 1, 1});
    x->requires_grad = true;
    auto y = sigmoid<double>(tape, x);
    auto loss = reduce_sum<double>(tape, y);
    tape.backward(loss);
    const double analytic = x->grad[0];
    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return sigmoid<double>(t2, x)->data[0];
    };
    const double numeric = oracle::numeric_grad(f, x->data[0], 1e-3);
    CHECK(analytic == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(numeric == doctest::Approx(analytic).epsilon(1e-5));
}

TEST_CASE("elementwise identities and scalars") {
    Tape tape;
    auto a = tensor_from({1, 1, 1, 2}, {3.5f, -2.25f});
    auto ones = make_tensor<float>(a->shape, 1.0f);
    auto zeros = make_tensor<float>(a->shape, 0.0f);
    auto prod = mul<float>(tape, a, ones);
    auto sum = add<float>(tape, a, zeros);
    for (int i = 0; i < 2; ++i) {
        CHECK(prod->data[i] == a->data[i]);
        CHECK(sum->data[i] == a->data[i]);
    }
    auto x = tensor_from({1, 1, 1, 1}, {2});
    auto y = tensor_from({1, 1, 1, 1}, {3});
    CHECK(mul<float>(tape, x, y)->data[0] == 6.0f);
    CHECK(add<float>(tape, x, y)->data[0] == 5.0f);
    CHECK_THROWS_AS(add<float>(tape, a, x), ShapeError);
    CHECK_THROWS_AS(mul<float>(tape, a, x), ShapeError);
}

TEST_CASE("mul backward is the other operand") {
    std::mt19937_64 rng(7);
    auto a = make_tensor<double>({1, 2, 3, 3});
    auto b = make_tensor<double>({1, 2, 3, 3});
    fill_uniform(*a, rng, -1.0, 1.0);
    fill_uniform(*b, rng, -1.0, 1.0);
    a->requires_grad = true;
    TapeT<double> tape;
    auto loss = reduce_sum<double>(tape, mul<double>(tape, a, b));
    tape.backward(loss);
    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return reduce_sum<double>(t2, mul<double>(t2, a, b))->data[0];
    };
    for (std::size_t i = 0; i < a->data.size(); ++i) {
        CHECK(a->grad[i] == doctest::Approx(b->data[i]).epsilon(1e-9));
        CHECK(oracle::numeric_grad(f, a->data[i], 1e-5) ==
              doctest::Approx(a->grad[i]).epsilon(1e-6));
    }
}

TEST_CASE("concat_channels shapes, round trip and gradient") {
    std::mt19937_64 rng(3);
    auto a = make_tensor<float>({1, 2, 2, 2});
    auto b = make_tensor<float>({1, 3, 2, 2});
    fill_uniform(*a, rng, -1.0f, 1.0f);
    fill_uniform(*b, rng, -1.0f, 1.0f);
    a->requires_grad = true;
    b->requires_grad = true;
    Tape tape;
    auto out = concat_channels<float>(tape, a, b);
    CHECK(out->shape == Shape4{1, 5, 2, 2});
    // Slicing the output recovers both inputs bitwise.
    for (int ci = 0; ci < 2; ++ci)
        for (int i = 0; i < 4; ++i) CHECK(out->plane(0, ci)[i] == a->plane(0, ci)[i]);
    for (int ci = 0; ci < 3; ++ci)
        for (int i = 0; i < 4; ++i) CHECK(out->plane(0, 2 + ci)[i] == b->plane(0, ci)[i]);

    auto loss = reduce_sum<float>(tape, out);
    tape.backward(loss);
    for (auto g : a->grad) CHECK(g == 1.0f);
    for (auto g : b->grad) CHECK(g == 1.0f);

    auto c = make_tensor<float>({1, 2, 3, 2});
    CHECK_THROWS_AS(concat_channels<float>(tape, a, c), ShapeError);
}

TEST_CASE("resize_nearest replicates blocks") {
    Tape tape;
    auto in = tensor_from({1, 1, 2, 2}, {1, 2, 3, 4});
    auto out = resize_nearest<float>(tape, in, 2);
    const float expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    for (int i = 0; i < 16; ++i) CHECK(out->data[i] == expect[i]);

    auto flat = make_tensor<float>({1, 2, 3, 3}, 7.25f);
    auto out3 = resize_nearest<float>(tape, flat, 3);
    for (auto v : out3->data) CHECK(v == 7.25f);

    CHECK_THROWS_AS(resize_nearest<float>(tape, in, 4), UnsupportedError);
}

TEST_CASE("resize_nearest backward under a mean loss") {
    auto in = make_tensor<double>({1, 1, 2, 2});
    std::mt19937_64 rng(9);
    fill_uniform(*in, rng, -1.0, 1.0);
    in->requires_grad = true;
    TapeT<double> tape;
    auto loss = reduce_mean<double>(tape, resize_nearest<double>(tape, in, 2));
    tape.backward(loss);
    // Each source cell feeds factor^2 output cells of a 16-element mean.
    for (auto g : in->grad) CHECK(g == doctest::Approx(4.0 / 16.0).epsilon(1e-12));
    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return reduce_mean<double>(t2, resize_nearest<double>(t2, in, 2))->data[0];
    };
    CHECK(oracle::numeric_grad(f, in->data[0], 1e-5) == doctest::Approx(in->grad[0]).epsilon(1e-8));
}

TEST_CASE("nearest upsample then 2x2 average pool recovers the input") {
    std::mt19937_64 rng(21);
    auto in = make_tensor<float>({1, 3, 4, 5});
    fill_uniform(*in, rng, -2.0f, 2.0f);
    Tape tape;
    auto up = resize_nearest<float>(tape, in, 2);
    for (int ci = 0; ci < 3; ++ci)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 5; ++x) {
                const float* p = up->plane(0, ci);
                const int w = 10;
                const float avg = (p[(2 * y) * w + 2 * x] + p[(2 * y) * w + 2 * x + 1] +
                                   p[(2 * y + 1) * w + 2 * x] + p[(2 * y + 1) * w + 2 * x + 1]) /
                                  4.0f;
                CHECK(avg == in->at(0, ci, y, x));
            }
}

TEST_CASE("resize_bilinear constant and ramp") {
    Tape tape;
    auto flat = make_tensor<float>({1, 2, 3, 4}, 0.625f);
    auto out = resize_bilinear<float>(tape, flat, 3);
    for (auto v : out->data) CHECK(v == doctest::Approx(0.625f).epsilon(1e-7));

    // A linear ramp stays a linear ramp away from the clamped borders.
    auto ramp = make_tensor<float>({1, 1, 1, 8});
    for (int x = 0; x < 8; ++x) ramp->data[std::size_t(x)] = float(x);
    auto up = resize_bilinear<float>(tape, ramp, 2);
    for (int ox = 2; ox < 14; ++ox) {
        const double expected = (ox + 0.5) / 2.0 - 0.5;
        CHECK(up->data[std::size_t(ox)] == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("resize_bilinear matches the half-pixel oracle") {
    auto in = tensor_from({1, 1, 2, 2}, {0, 1, 1, 2});
    Tape tape;
    auto out = resize_bilinear<float>(tape, in, 2);
    std::vector<double> src = {0, 1, 1, 2};
    const auto ref = oracle::bilinear(src, 2, 2, 2);
    for (int i = 0; i < 16; ++i)
        CHECK(out->data[i] == doctest::Approx(ref[std::size_t(i)]).epsilon(1e-6));
    // Convexity: every output lies within the input range.
    for (auto v : out->data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 2.0f);
    }
    CHECK_THROWS_AS(resize_bilinear<float>(tape, in, 5), UnsupportedError);
}

TEST_CASE("pool constants and means") {
    Tape tape;
    auto flat = make_tensor<float>({1, 3, 4, 4}, 0.375f);
    auto gap = global_avg_pool<float>(tape, flat);
    CHECK(gap->shape == Shape4{1, 3, 1, 1});
    for (auto v : gap->data) CHECK(v == 0.375f);
    auto stats = channel_stat_pool<float>(tape, flat);
    CHECK(stats->shape == Shape4{1, 2, 4, 4});
    for (auto v : stats->data) CHECK(v == 0.375f);

    auto seq = make_tensor<float>({1, 2, 2, 2});
    for (int i = 0; i < 8; ++i) seq->data[std::size_t(i)] = float(i);
    auto g2 = global_avg_pool<float>(tape, seq);
    CHECK(g2->data[0] == 1.5f);
    CHECK(g2->data[1] == 5.5f);
}

TEST_CASE("pool gradients match finite differences") {
    std::mt19937_64 rng(17);
    auto x = make_tensor<double>({1, 3, 4, 4});
    fill_uniform(*x, rng, -1.0, 1.0);
    x->requires_grad = true;

    auto run = [&](bool stats) {
        TapeT<double> tape;
        auto pooled = stats ? channel_stat_pool<double>(tape, x) : global_avg_pool<double>(tape, x);
        // Weighted sum makes every output cell matter distinctly.
        auto weights = make_tensor<double>(pooled->shape);
        for (std::size_t i = 0; i < weights->data.size(); ++i)
            weights->data[i] = 0.25 + 0.01 * double(i);
        auto loss = reduce_sum<double>(tape, mul<double>(tape, pooled, weights));
        x->zero_grad();
        tape.backward(loss);
        auto f = [&]() {
            TapeT<double> t2;
            t2.set_recording(false);
            auto pooled2 =
                stats ? channel_stat_pool<double>(t2, x) : global_avg_pool<double>(t2, x);
            return reduce_sum<double>(t2, mul<double>(t2, pooled2, weights))->data[0];
        };
        for (std::size_t i = 0; i < x->data.size(); i += 7)
            CHECK(oracle::numeric_grad(f, x->data[i], 1e-6) ==
                  doctest::Approx(x->grad[i]).epsilon(1e-6));
    };
    run(false);
    run(true);
}

TEST_CASE("scale_channels and scale_spatial gradients") {
    std::mt19937_64 rng(23);
    auto x = make_tensor<double>({1, 3, 3, 3});
    fill_uniform(*x, rng, -1.0, 1.0);
    x->requires_grad = true;

    auto s = make_tensor<double>({1, 3, 1, 1});
    fill_uniform(*s, rng, 0.1, 0.9);
    s->requires_grad = true;
    auto m = make_tensor<double>({1, 1, 3, 3});
    fill_uniform(*m, rng, 0.1, 0.9);
    m->requires_grad = true;

    TapeT<double> tape;
    auto y = scale_channels<double>(tape, x, s);
    auto z = scale_spatial<double>(tape, y, m);
    auto loss = reduce_sum<double>(tape, z);
    tape.backward(loss);

    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return reduce_sum<double>(t2,
                                  scale_spatial<double>(t2, scale_channels<double>(t2, x, s), m))
            ->data[0];
    };
    for (std::size_t i = 0; i < x->data.size(); i += 5)
        CHECK(oracle::numeric_grad(f, x->data[i], 1e-6) ==
              doctest::Approx(x->grad[i]).epsilon(1e-7));
    for (std::size_t i = 0; i < s->data.size(); ++i)
        CHECK(oracle::numeric_grad(f, s->data[i], 1e-6) ==
              doctest::Approx(s->grad[i]).epsilon(1e-7));
    for (std::size_t i = 0; i < m->data.size(); ++i)
        CHECK(oracle::numeric_grad(f, m->data[i], 1e-6) ==
              doctest::Approx(m->grad[i]).epsilon(1e-7));

    CHECK_THROWS_AS(scale_channels<double>(tape, x, m), ShapeError);
}

TEST_CASE("backward of sum(w * x) puts x into w.grad exactly") {
    std::mt19937_64 rng(29);
    auto w = make_tensor<float>({1, 2, 3, 3});
    auto x = make_tensor<float>({1, 2, 3, 3});
    fill_uniform(*w, rng, -1.0f, 1.0f);
    fill_uniform(*x, rng, -1.0f, 1.0f);
    w->requires_grad = true;
    Tape tape;
    auto loss = reduce_sum<float>(tape, mul<float>(tape, w, x));
    tape.backward(loss);
    for (std::size_t i = 0; i < w->data.size(); ++i) CHECK(w->grad[i] == x->data[i]);
}

TEST_CASE("backward guards") {
    Tape tape;
    auto w = make_param<float>({1, 1, 2, 2}, 1.0f);
    auto y = mul<float>(tape, w, w);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);  // non-scalar loss
    auto loss = reduce_sum<float>(tape, y);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ShapeError);  // consumed tape
    tape.clear();
    CHECK_THROWS_AS(tape.backward(loss), ShapeError);  // empty tape
}

TEST_CASE("gradient accumulates once per recorded use") {
    auto w = make_param<float>({1, 1, 1, 1}, 3.0f);
    Tape tape;
    auto y = add<float>(tape, w, w);  // d/dw = 2
    auto loss = reduce_sum<float>(tape, y);
    tape.backward(loss);
    CHECK(w->grad[0] == 2.0f);
}

TEST_CASE("ops do not mutate their inputs") {
    std::mt19937_64 rng(31);
    auto a = make_tensor<float>({1, 2, 4, 4});
    auto b = make_tensor<float>({1, 2, 4, 4});
    auto w = make_tensor<float>({2, 2, 3, 3});
    fill_uniform(*a, rng, -1.0f, 1.0f);
    fill_uniform(*b, rng, -1.0f, 1.0f);
    fill_uniform(*w, rng, -1.0f, 1.0f);
    const auto a0 = a->data;
    const auto b0 = b->data;
    const auto w0 = w->data;
    Tape tape;
    conv2d<float>(tape, a, w, nullptr);
    sigmoid<float>(tape, a);
    leaky_relu<float>(tape, a, 0.2f);
    mul<float>(tape, a, b);
    add<float>(tape, a, b);
    concat_channels<float>(tape, a, b);
    resize_nearest<float>(tape, a, 2);
    resize_bilinear<float>(tape, a, 2);
    global_avg_pool<float>(tape, a);
    channel_stat_pool<float>(tape, a);
    CHECK(a->data == a0);
    CHECK(b->data == b0);
    CHECK(w->data == w0);
}

TEST_CASE("seeded backward runs are bitwise identical") {
    auto run = [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto x = make_tensor<float>({1, 2, 5, 5});
        auto w = make_param<float>({2, 2, 3, 3});
        auto b = make_param<float>({2, 1, 1, 1});
        fill_uniform(*x, rng, -1.0f, 1.0f);
        fill_uniform(*w, rng, -1.0f, 1.0f);
        fill_uniform(*b, rng, -0.5f, 0.5f);
        Tape tape;
        auto y = sigmoid<float>(tape, conv2d<float>(tape, x, w, b));
        auto loss = reduce_mean<float>(tape, y);
        tape.backward(loss);
        std::vector<float> out = w->grad;
        out.insert(out.end(), b->grad.begin(), b->grad.end());
        return out;
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("l1_loss values and gradient") {
    Tape tape;
    auto p = make_tensor<float>({1, 1, 2, 2}, 0.75f);
    auto t = make_tensor<float>({1, 1, 2, 2}, 0.25f);
    CHECK(l1_loss<float>(tape, p, t)->data[0] == 0.5f);
    CHECK(l1_loss<float>(tape, p, p)->data[0] == 0.0f);

    auto pd = make_tensor<double>({1, 1, 2, 3});
    auto td = make_tensor<double>({1, 1, 2, 3});
    std::mt19937_64 rng(37);
    fill_uniform(*pd, rng, -1.0, 1.0);
    fill_uniform(*td, rng, -1.0, 1.0);
    pd->requires_grad = true;
    TapeT<double> tape2;
    auto loss = l1_loss<double>(tape2, pd, td);
    tape2.backward(loss);
    for (std::size_t i = 0; i < pd->data.size(); ++i) {
        const double sign = pd->data[i] > td->data[i] ? 1.0 : -1.0;
        CHECK(pd->grad[i] == doctest::Approx(sign / 6.0).epsilon(1e-12));
    }
}
