#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "attention_oracle.hpp"
#include "gradcheck.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/ops.hpp"
#include "spectragen/rgan/model.hpp"

using namespace spectragen;
using namespace spectragen::rgan;

namespace {

DenseArray random_array(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    RandomSource rng(seed);
    return uniform_sample(rng, std::move(shape), lo, hi);
}

AttentionConfig small_config(std::size_t channels = 8, std::size_t heads = 1) {
    AttentionConfig c;
    c.channels = channels;
    c.heads = heads;
    c.window_h = {2, 4};
    c.window_v = {4, 2};
    return c;
}

double psnr(const DenseArray& a, const DenseArray& b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(1.0 / (se / static_cast<double>(a.size())));
}

}  // namespace

TEST_CASE("window partition counts, order and round trip") {
    const auto x = random_array({3, 8, 8}, 1);
    const auto wf = partition_windows(x, {2, 4});
    CHECK(wf.windows.shape() == Shape{8, 8, 3});
    // Window 1 is the top-right 2x4 block; its first token is pixel (0, 4).
    CHECK(wf.windows[(1 * 8 + 0) * 3 + 2] == x.at(2, 0, 4));
    CHECK(wf.windows[(2 * 8 + 5) * 3 + 0] == x.at(0, 3, 1));
    CHECK(reverse_windows(wf) == x);

    const auto single = partition_windows(x, {1, 1});
    CHECK(single.windows.shape() == Shape{64, 1, 3});
    for (std::size_t p = 0; p < 64; ++p)
        for (std::size_t c = 0; c < 3; ++c) CHECK(single.windows[p * 3 + c] == x[c * 64 + p]);

    for (WindowShape w : {WindowShape{1, 8}, WindowShape{8, 1}, WindowShape{4, 2}, WindowShape{8, 8}}) {
        CHECK(reverse_windows(partition_windows(x, w)) == x);
    }
    CHECK_THROWS_AS(partition_windows(x, {3, 2}), ShapeError);
}

TEST_CASE("qkv projection") {
    auto cfg = small_config();
    ParameterSet ps;
    RandomSource rng(3);
    auto w = make_rca_weights(ps, "rca", cfg, rng);
    const Var z(random_array({8, 8, 8}, 4));

    SUBCASE("zero weights") {
        w.qkv_kernel.value().fill(0.0);
        const auto f = project_qkv(z, w, cfg);
        for (const auto* t : {&f.query, &f.key, &f.value}) CHECK(max_abs_diff(t->value(), DenseArray({8, 8, 8})) == 0.0);
    }
    SUBCASE("identity-like kernel") {
        w.qkv_kernel.value().fill(0.0);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t r = 0; r < 3; ++r) w.qkv_kernel.value()[(r * 8 + i) * 8 + i] = 1.0;
        const auto f = project_qkv(z, w, cfg);
        CHECK(f.query.value() == z.value());
        CHECK(f.key.value() == z.value());
        CHECK(f.value.value() == z.value());
    }
    SUBCASE("conv then slice") {
        cfg.qkv_kernel = 3;
        ParameterSet ps3;
        auto w3 = make_rca_weights(ps3, "rca", cfg, rng);
        w3.qkv_bias.value() = random_array({24}, 5);
        const auto full = conv2d(z.value(), w3.qkv_kernel.value(), w3.qkv_bias.value(), 1);
        const auto f = project_qkv(z, w3, cfg);
        const std::size_t plane = 64;
        for (std::size_t i = 0; i < 8 * plane; ++i) {
            CHECK(f.query.value()[i] == full[i]);
            CHECK(f.key.value()[i] == full[8 * plane + i]);
            CHECK(f.value.value()[i] == full[16 * plane + i]);
        }
    }
    SUBCASE("odd channels") {
        CHECK_THROWS_AS(spectral_split(Var(DenseArray({3, 2, 2}))), ShapeError);
        AttentionConfig odd = cfg;
        odd.channels = 7;
        CHECK_THROWS_AS(odd.validate(), ShapeError);
    }
}

TEST_CASE("rectangular cross-attention matches the dense oracle") {
    for (std::size_t heads : {1, 2}) {
        for (std::size_t kernel : {1, 3}) {
            CAPTURE(heads);
            CAPTURE(kernel);
            auto cfg = small_config(8, heads);
            cfg.qkv_kernel = kernel;
            ParameterSet ps;
            RandomSource rng(10 + heads + kernel);
            auto w = make_rca_weights(ps, "rca", cfg, rng);
            w.qkv_bias.value() = random_array({24}, 11);
            w.pos_h.value() = random_array(w.pos_h.shape(), 12);
            w.pos_v.value() = random_array(w.pos_v.shape(), 13);
            const auto z1 = random_array({8, 8, 12}, 14), z2 = random_array({8, 8, 12}, 15);
            const auto [o1, o2] = rca_forward(Var(z1), Var(z2), cfg, w);
            const auto [d1, d2] = testing::dense_rca(z1, z2, w, cfg);
            CHECK(max_abs_diff(o1.value(), d1) < 1e-10);
            CHECK(max_abs_diff(o2.value(), d2) < 1e-10);
        }
    }
}

TEST_CASE("cross-attention trivial cases") {
    auto cfg = small_config();
    ParameterSet ps;
    RandomSource rng(20);
    auto w = make_rca_weights(ps, "rca", cfg, rng);
    const Var z1(random_array({8, 8, 8}, 21)), z2(random_array({8, 8, 8}, 22));

    SUBCASE("zero values") {
        // Zero the V rows of the projection so V1 = V2 = 0.
        for (std::size_t i = 16 * 8; i < 24 * 8; ++i) w.qkv_kernel.value()[i] = 0.0;
        const auto [o1, o2] = rca_forward(z1, z2, cfg, w);
        CHECK(max_abs_diff(o1.value(), DenseArray({8, 8, 8})) == 0.0);
        CHECK(max_abs_diff(o2.value(), DenseArray({8, 8, 8})) == 0.0);
    }
    SUBCASE("singleton windows") {
        cfg.window_h = {1, 1};
        cfg.window_v = {1, 1};
        ParameterSet ps1;
        auto w1 = make_rca_weights(ps1, "rca", cfg, rng);
        const auto [o1, o2] = rca_forward(z1, z2, cfg, w1);
        CHECK(max_abs_diff(o1.value(), project_qkv(z1, w1, cfg).value.value()) < 1e-15);
        CHECK(max_abs_diff(o2.value(), project_qkv(z2, w1, cfg).value.value()) < 1e-15);
    }
    SUBCASE("swap equivariance") {
        w.pos_h.value() = random_array(w.pos_h.shape(), 23);
        w.pos_v.value() = random_array(w.pos_v.shape(), 24);
        const auto [a1, a2] = rca_forward(z1, z2, cfg, w);
        const auto [b1, b2] = rca_forward(z2, z1, cfg, w);
        CHECK(max_abs_diff(a1.value(), b2.value()) < 1e-14);
        CHECK(max_abs_diff(a2.value(), b1.value()) < 1e-14);
    }
    SUBCASE("attention rows sum to one") {
        w.pos_h.value() = random_array(w.pos_h.shape(), 25, -3.0, 3.0);
        std::size_t rows = 0;
        double worst = 0.0;
        AttentionObserver obs = [&](std::size_t, std::size_t, std::span<const double> a, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    CHECK(a[i * n + j] >= 0.0);
                    s += a[i * n + j];
                }
                worst = std::max(worst, std::abs(s - 1.0));
                ++rows;
            }
        };
        rca_forward(z1, z2, cfg, w, &obs);
        // Two directions, two branches, every pixel is one query row in each.
        CHECK(rows == 4 * 64);
        CHECK(worst < 1e-9);
    }
    SUBCASE("divisibility and shape errors") {
        CHECK_THROWS_AS(rca_forward(Var(DenseArray({8, 6, 8})), Var(DenseArray({8, 6, 8})), cfg, w), ShapeError);
        CHECK_THROWS_AS(rca_forward(z1, Var(DenseArray({8, 8, 4})), cfg, w), ShapeError);
    }
}

TEST_CASE("window attention gradient") {
    const WindowShape win{2, 4};
    const Var q(random_array({4, 4, 8}, 30), true), k(random_array({4, 4, 8}, 31), true);
    const Var v(random_array({4, 4, 8}, 32), true), pos(random_array({2, 8, 8}, 33), true);
    std::vector<Parameter> params{Parameter("q", q.value()), Parameter("k", k.value()), Parameter("v", v.value()),
                                  Parameter("p", pos.value())};
    const auto mask = random_array({4, 4, 8}, 34);
    auto loss = [&] {
        auto out = window_attention(params[0].var(), params[1].var(), params[2].var(), params[3].var(), win, 2);
        return sum(mul(out, Var(mask)));
    };
    RandomSource rng(35);
    const auto report = testing::check_gradients(params, loss, rng, 40);
    INFO(report.worst_location);
    CHECK(report.worst_relative_error < 1e-6);
}

TEST_CASE("guided attention layer") {
    RganConfig cfg;
    cfg.attention = small_config();
    cfg.layers = 2;
    RganModel model(cfg);
    const Var hsi(random_array({8, 8, 8}, 40)), rgb(random_array({8, 8, 8}, 41));

    SUBCASE("zero weights give the identity") {
        for (auto& p : model.parameters()) p.value().fill(0.0);
        const auto [h, r] = gal_forward(hsi, rgb, model.layers()[0], cfg.attention);
        CHECK(h.value() == hsi.value());
        CHECK(r.value() == rgb.value());
    }
    SUBCASE("shape is preserved") {
        for (std::size_t c : {4, 8, 12}) {
            RganConfig cc = cfg;
            cc.attention.channels = c;
            cc.attention.heads = c == 8 ? 2 : 1;
            RganModel m(cc);
            const Var a(random_array({c, 8, 16}, 42)), b(random_array({c, 8, 16}, 43));
            const auto [h, r] = gal_forward(a, b, m.layers()[0], cc.attention);
            CHECK(h.shape() == a.shape());
            CHECK(r.shape() == b.shape());
        }
    }
    SUBCASE("gradient through two stacked layers") {
        RandomSource rng(44);
        testing::randomize_parameters(model.parameters(), rng, 0.4);
        const auto mask = random_array({8, 8, 8}, 45);
        auto loss = [&] {
            auto [h, r] = gal_forward(hsi, rgb, model.layers()[0], cfg.attention);
            std::tie(h, r) = gal_forward(h, r, model.layers()[1], cfg.attention);
            return add(mean(mul(h, Var(mask))), scale(mean(mul(r, r)), 0.1));
        };
        std::vector<Parameter> gal_params;
        for (const auto& p : model.parameters())
            if (p.name().starts_with("gal")) gal_params.push_back(p);
        const auto report = testing::check_gradients(gal_params, loss, rng, 20);
        INFO(report.worst_location);
        CHECK(report.coordinates >= 20 * gal_params.size() / 2);
        CHECK(report.worst_relative_error < 1e-4);
    }
}

TEST_CASE("full model gradient check, 2 layers, 8 channels, 8x8") {
    RganConfig cfg;
    cfg.bands = 6;
    cfg.attention.channels = 8;
    cfg.attention.window_h = {2, 8};
    cfg.attention.window_v = {8, 2};
    cfg.layers = 2;
    RganModel model(cfg);
    RandomSource rng(50);
    testing::randomize_parameters(model.parameters(), rng, 0.3);
    const Var lr(random_array({6, 4, 4}, 51, 0.0, 1.0)), rgb(random_array({3, 8, 8}, 52, 0.0, 1.0));
    const Var target(random_array({6, 8, 8}, 53, 0.0, 1.0));
    auto loss = [&] { return mse_loss(model.forward(lr, rgb), target); };
    const auto report = testing::check_gradients(model.parameters(), loss, rng, 20);
    INFO(report.worst_location);
    CHECK(report.coordinates >= 20 * model.parameters().size() / 2);
    CHECK(report.worst_relative_error < 1e-4);
}

TEST_CASE("model at initialization and shapes") {
    RganConfig cfg;
    cfg.bands = 8;
    const auto wl = hsi::uniform_grid(420.0, 700.0, 8);
    const auto hr = testing::mixture_cube(16, 16, wl, 60);
    const auto pair = make_training_pair(hr, 2);
    CHECK(pair.lr.height() == 8);
    CHECK(pair.hr_rgb.bands() == 3);

    RganModel model(cfg);
    const auto out = rgan_forward(pair.lr, pair.hr_rgb, model);
    CHECK(out.height() == 16);
    CHECK(out.width() == 16);
    const auto up = bilinear_resize(pair.lr.values(), 16, 16);
    CHECK(max_abs_diff(out.values(), up) < 1e-15);

    SUBCASE("scale 4 and extents needing padding") {
        RganConfig c4 = cfg;
        c4.scale = 4;
        RganModel m4(c4);
        const auto big = testing::mixture_cube(20, 12, wl, 61);
        const auto p4 = make_training_pair(big, 4);
        const auto o4 = rgan_forward(p4.lr, p4.hr_rgb, m4);
        CHECK(o4.height() == 20);
        CHECK(o4.width() == 12);
        // Reflect padding only changes the bilinear taps next to the padded
        // bottom and right edges.
        const auto ref = bilinear_resize(p4.lr.values(), 20, 12);
        double worst = 0.0;
        for (std::size_t b = 0; b < 8; ++b)
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t x = 0; x < 8; ++x) worst = std::max(worst, std::abs(o4.at(b, y, x) - ref.at(b, y, x)));
        CHECK(worst < 1e-12);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(rgan_forward(pair.lr, pair.lr, model), ShapeError);
        CHECK_THROWS_AS(model.forward(Var(DenseArray({8, 3, 8})), Var(DenseArray({3, 6, 16}))), ShapeError);
        RganConfig bad = cfg;
        bad.scale = 3;
        CHECK_THROWS_AS(RganModel{bad}, ShapeError);
    }
}

TEST_CASE("perfect model has zero loss") {
    const Var t(random_array({4, 8, 8}, 70));
    CHECK(l1_loss(t, t).value().item() == 0.0);
}

TEST_CASE("overfit one 32x32 to 64x64 pair") {
    RganConfig cfg;
    cfg.bands = 8;
    cfg.seed = 7;
    cfg.attention.window_h = {1, 2};
    cfg.attention.window_v = {2, 1};
    const auto hr = testing::textured_cube(64, 64, hsi::uniform_grid(420.0, 700.0, 8), 80);
    const std::vector<RganTrainingPair> pairs{make_training_pair(hr, 2)};
    const double baseline = psnr(bilinear_resize(pairs[0].lr.values(), 64, 64), hr.values());

    RganModel model(cfg);
    RganTrainConfig tc;
    tc.seed = 3;
    const auto trace = train_rgan(model, pairs, tc);
    REQUIRE(trace.losses.size() == 200);
    const double quality = psnr(rgan_forward(pairs[0].lr, pairs[0].hr_rgb, model).values(), hr.values());
    MESSAGE("bilinear " << baseline << " dB, trained " << quality << " dB, loss " << trace.losses.front() << " -> "
                        << trace.losses.back());
    CHECK(trace.losses.back() < 0.1 * trace.losses.front());
    CHECK(quality > 40.0);

    SUBCASE("determinism and checkpoint round trip") {
        RganTrainConfig shortened = tc;
        shortened.steps = 15;
        RganModel first(cfg), second(cfg);
        CHECK(train_rgan(first, pairs, shortened).losses == train_rgan(second, pairs, shortened).losses);

        const auto dir = testing::scratch_dir("rgan_ckpt");
        save_rgan(model, dir / "model.json");
        const auto loaded = load_rgan(dir / "model.json");
        CHECK(loaded.config().to_json() == model.config().to_json());
        const auto a = rgan_forward(pairs[0].lr, pairs[0].hr_rgb, model).values();
        const auto b = rgan_forward(pairs[0].lr, pairs[0].hr_rgb, loaded).values();
        CHECK(max_abs_diff(a, b) < 1e-5);
    }
}
