#include <doctest.h>

#include "oracles.hpp"
#include "pan/gradcheck.hpp"

using namespace pan;

TEST_CASE("conv2d parameter gradients match finite differences") {
    std::mt19937_64 rng(101);
    auto x = make_tensor<double>({2, 2, 5, 5});
    auto w = make_param<double>({3, 2, 3, 3});
    auto b = make_param<double>({3, 1, 1, 1});
    fill_uniform(*x, rng, -1.0, 1.0);
    fill_uniform(*w, rng, -0.5, 0.5);
    fill_uniform(*b, rng, -0.5, 0.5);
    x->requires_grad = true;

    auto weights = make_tensor<double>({2, 3, 5, 5});
    fill_uniform(*weights, rng, -1.0, 1.0);

    TapeT<double> tape;
    auto y = conv2d<double>(tape, x, w, b);
    auto loss = reduce_sum<double>(tape, mul<double>(tape, y, weights));
    tape.backward(loss);

    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        auto y2 = conv2d<double>(t2, x, w, b);
        return reduce_sum<double>(t2, mul<double>(t2, y2, weights))->data[0];
    };
    for (std::size_t i = 0; i < w->data.size(); i += 5)
        CHECK(oracle::numeric_grad(f, w->data[i], 1e-6) ==
              doctest::Approx(w->grad[i]).epsilon(1e-7));
    for (std::size_t i = 0; i < b->data.size(); ++i)
        CHECK(oracle::numeric_grad(f, b->data[i], 1e-6) ==
              doctest::Approx(b->grad[i]).epsilon(1e-7));
    for (std::size_t i = 0; i < x->data.size(); i += 11)
        CHECK(oracle::numeric_grad(f, x->data[i], 1e-6) ==
              doctest::Approx(x->grad[i]).epsilon(1e-7));
}

TEST_CASE("leaky_relu and sigmoid chained gradients") {
    std::mt19937_64 rng(103);
    auto x = make_tensor<double>({1, 2, 4, 4});
    fill_uniform(*x, rng, -1.0, 1.0);
    x->requires_grad = true;
    TapeT<double> tape;
    auto y = sigmoid<double>(tape, leaky_relu<double>(tape, x, 0.2));
    auto loss = reduce_mean<double>(tape, y);
    tape.backward(loss);
    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return reduce_mean<double>(t2, sigmoid<double>(t2, leaky_relu<double>(t2, x, 0.2)))->data[0];
    };
    for (std::size_t i = 0; i < x->data.size(); i += 3)
        CHECK(oracle::numeric_grad(f, x->data[i], 1e-6) ==
              doctest::Approx(x->grad[i]).epsilon(1e-6));
}

TEST_CASE("bilinear skip gradient flows through the add") {
    std::mt19937_64 rng(105);
    auto x = make_tensor<double>({1, 1, 3, 3});
    fill_uniform(*x, rng, -1.0, 1.0);
    x->requires_grad = true;
    TapeT<double> tape;
    auto up = resize_bilinear<double>(tape, x, 2);
    auto loss = reduce_mean<double>(tape, up);
    tape.backward(loss);
    auto f = [&]() {
        TapeT<double> t2;
        t2.set_recording(false);
        return reduce_mean<double>(t2, resize_bilinear<double>(t2, x, 2))->data[0];
    };
    for (std::size_t i = 0; i < x->data.size(); ++i)
        CHECK(oracle::numeric_grad(f, x->data[i], 1e-6) ==
              doctest::Approx(x->grad[i]).epsilon(1e-7));
}

TEST_CASE("full-model finite differences pass for every block type") {
    for (BlockType bt :
         {BlockType::SCPA, BlockType::RB, BlockType::RB_CA, BlockType::RB_SA, BlockType::RB_PA}) {
        CAPTURE(to_string(bt));
        ModelConfig cfg;
        cfg.scale = 2;
        cfg.block_type = bt;
        cfg.num_blocks = 2;
        cfg.nf = 8;
        cfg.unf = 6;
        const auto f64 = gradcheck_model<double>(cfg, 515, 120, 1e-5);
        CHECK(f64.max_rel_error < 1e-5);
        const auto f32 = gradcheck_model<float>(cfg, 515, 120, 1e-2);
        CHECK(f32.max_rel_error < 1e-2);
    }
}

TEST_CASE("scale-3 and scale-4 reconstruction paths gradcheck") {
    for (int scale : {3, 4}) {
        ModelConfig cfg;
        cfg.scale = scale;
        cfg.num_blocks = 1;
        cfg.nf = 8;
        cfg.unf = 6;
        const auto res = gradcheck_model<double>(cfg, 99, 80, 1e-5);
        CHECK(res.max_rel_error < 1e-5);
    }
}
