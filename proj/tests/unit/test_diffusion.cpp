#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "spectragen/diffusion/augment.hpp"
#include "spectragen/diffusion/dsrnet.hpp"
#include "spectragen/diffusion/training.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/numerics/ops.hpp"

using namespace spectragen;
using namespace spectragen::diffusion;

namespace {

class ConstantPredictor final : public NoisePredictor {
public:
    explicit ConstantPredictor(DenseArray value) : value_(std::move(value)) {}
    Var predict(const Var& z, std::size_t t, const ConditionStack&) const override {
        visited.push_back(t);
        return value_.empty() ? Var(DenseArray(z.shape())) : Var(value_);
    }
    mutable std::vector<std::size_t> visited;

private:
    DenseArray value_;
};

DenseArray random_array(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    RandomSource rng(seed);
    return uniform_sample(rng, std::move(shape), lo, hi);
}

DenseArray disk_image(std::uint64_t seed, std::size_t size = 32) {
    RandomSource rng(seed);
    const double n = static_cast<double>(size);
    const double cy = n * (0.25 + 0.5 * rng.uniform()), cx = n * (0.25 + 0.5 * rng.uniform());
    const double r = n * (0.12 + 0.2 * rng.uniform());
    const double fg[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    const double bg[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    DenseArray im({3, size, size});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x)
                im.at(c, y, x) = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) < r ? fg[c] : bg[c];
    return im;
}

double psnr(const DenseArray& a, const DenseArray& b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

}  // namespace

TEST_CASE("noise schedule") {
    const auto one = make_schedule(1, 0.5, 0.5);
    CHECK(one.alpha_bar.size() == 2);
    CHECK(one.alpha_bar[0] == 1.0);
    CHECK(one.alpha_bar[1] == 0.5);

    const auto s = make_schedule();
    REQUIRE(s.steps == 1000);
    double product = 1.0;
    for (std::size_t t = 1; t <= 1000; ++t) {
        const double beta = 1e-4 + (2e-2 - 1e-4) * static_cast<double>(t - 1) / 999.0;
        product *= 1.0 - beta;
        CHECK(std::abs(s.alpha_bar[t] - product) < 1e-12);
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        CHECK(s.alpha[t] > 0.0);
        CHECK(s.alpha[t] < 1.0);
    }
    CHECK(s.alpha_bar[1000] > 0.0);
    CHECK(s.alpha_bar[1000] < 0.01);

    const auto flat = make_schedule(50, 0.03, 0.03);
    for (std::size_t t = 0; t <= 50; ++t) CHECK(std::abs(flat.alpha_bar[t] - std::pow(0.97, static_cast<double>(t))) < 1e-12);

    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), DataError);
    CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), DataError);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), DataError);
    CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), DataError);
}

TEST_CASE("forward noising") {
    const auto s = make_schedule();
    const auto z0 = random_array({2, 4, 4}, 1);
    const auto eps = random_array({2, 4, 4}, 2, -1.0, 1.0);
    CHECK(forward_noise(z0, 0, eps, s) == z0);
    const auto scaled = forward_noise(z0, 300, DenseArray(z0.shape()), s);
    for (std::size_t i = 0; i < z0.size(); ++i) CHECK(scaled[i] == std::sqrt(s.alpha_bar[300]) * z0[i]);
    CHECK_THROWS_AS(forward_noise(z0, 1001, eps, s), ShapeError);
    CHECK_THROWS_AS(forward_noise(z0, 5, DenseArray({2, 4}), s), ShapeError);

    SUBCASE("marginal statistics") {
        const std::size_t n = 100000, t = 400;
        const double c = 0.7;
        RandomSource rng(3);
        const auto zt = forward_noise(DenseArray({n}, c), t, gaussian_sample(rng, {n}), s);
        double mean = 0.0;
        for (double v : zt.data()) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : zt.data()) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n - 1);
        const double sigma = std::sqrt(1.0 - s.alpha_bar[t]);
        CHECK(std::abs(mean - std::sqrt(s.alpha_bar[t]) * c) < 4.0 * sigma / std::sqrt(static_cast<double>(n)));
        CHECK(std::abs(var / (1.0 - s.alpha_bar[t]) - 1.0) < 0.02);
    }
}

TEST_CASE("ddim step") {
    const auto s = make_schedule();
    const auto z0 = random_array({3, 8, 8}, 4);
    RandomSource rng(5);
    const auto eps = gaussian_sample(rng, z0.shape());
    for (std::size_t t : timestep_subsequence(1000, 10)) {
        CAPTURE(t);
        const auto zt = forward_noise(z0, t, eps, s);
        CHECK(max_abs_diff(ddim_step(zt, eps, t, 0, s), z0) < 1e-10);
    }
    const DenseArray zero({3, 8, 8});
    CHECK(ddim_step(zero, zero, 500, 100, s) == zero);
    const auto zt = forward_noise(z0, 700, eps, s);
    CHECK(ddim_step(zt, eps, 700, 600, s) == ddim_step(zt, eps, 700, 600, s));
    CHECK(max_abs_diff(ddim_step(zt, eps, 700, 600, s), forward_noise(z0, 600, eps, s)) < 1e-12);
    CHECK_THROWS_AS(ddim_step(zt, eps, 500, 500, s), ShapeError);
    CHECK_THROWS_AS(ddim_step(zt, eps, 1001, 10, s), ShapeError);
}

TEST_CASE("timestep subsequence") {
    const auto seq = timestep_subsequence(1000, 10);
    CHECK(seq == std::vector<std::size_t>{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000});
    const auto dense = timestep_subsequence(7, 7);
    CHECK(dense == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
    const auto uneven = timestep_subsequence(10, 3);
    CHECK(uneven == std::vector<std::size_t>{3, 6, 10});
    CHECK_THROWS_AS(timestep_subsequence(10, 11), DataError);
    CHECK_THROWS_AS(timestep_subsequence(10, 0), DataError);
}

TEST_CASE("latent codecs") {
    const auto im = random_array({3, 8, 12}, 6);
    IdentityCodec id;
    CHECK(id.decode(id.encode(im)) == im);
    SpaceToDepthCodec s2d(2);
    CHECK(s2d.latent_shape(im.shape()) == Shape{12, 4, 6});
    CHECK(s2d.decode(s2d.encode(im)) == im);
    SpaceToDepthCodec s4(4);
    const auto sq = random_array({2, 8, 8}, 7);
    CHECK(s4.decode(s4.encode(sq)) == sq);
    CHECK_THROWS_AS(s2d.latent_shape({3, 7, 8}), ShapeError);
    CHECK(codec_kind_from_string("space_to_depth") == CodecKind::space_to_depth);
    CHECK_THROWS_AS(codec_kind_from_string("vae"), DataError);

    SUBCASE("tiny autoencoder") {
        TinyAutoencoder ae(3, 12, 2, 1);
        std::vector<DenseArray> images;
        for (std::uint64_t i = 0; i < 4; ++i) images.push_back(disk_image(i, 16));
        const auto losses = train_autoencoder(ae, images, 300, 1e-2, 2);
        CHECK(losses.back() < 0.01 * losses.front());
        CHECK(ae.latent_shape({3, 16, 16}) == Shape{12, 8, 8});

        const auto dir = testing::scratch_dir("codec");
        save_codec(ae, dir / "ae.json");
        const auto loaded = load_codec(dir / "ae.json");
        CHECK(max_abs_diff(loaded->decode(loaded->encode(images[0])), ae.decode(ae.encode(images[0]))) < 1e-5);
    }
}

TEST_CASE("condition stack and proxies") {
    ConditionStack stack;
    CHECK(stack.empty());
    stack.add(ConditionTag::hed, DenseArray({1, 8, 8}));
    CHECK_THROWS_AS(stack.add(ConditionTag::hed, DenseArray({1, 8, 8})), DataError);
    CHECK_THROWS_AS(stack.add(ConditionTag::seg, DenseArray({1, 8, 4})), DataError);
    stack.add(ConditionTag::seg, DenseArray({1, 8, 8}));
    CHECK(stack.without(ConditionTag::hed).maps().size() == 1);
    CHECK(condition_tag_from_string("mlsd") == ConditionTag::mlsd);
    CHECK_THROWS_AS(condition_tag_from_string("depth"), DataError);

    // A vertical step edge: Sobel responds on the two columns around it.
    DenseArray step({1, 6, 6});
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 3; x < 6; ++x) step.at(0, y, x) = 1.0;
    const auto edges = sobel_edges(step);
    CHECK(edges.at(0, 2, 2) == 1.0);
    CHECK(edges.at(0, 2, 3) == 1.0);
    CHECK(edges.at(0, 2, 0) == 0.0);
    CHECK(edges.at(0, 2, 5) == 0.0);
    const auto sketch = sketch_map(step, 0.5);
    CHECK(sketch.at(0, 4, 2) == 1.0);
    CHECK(sketch.at(0, 4, 4) == 0.0);

    DenseArray two({1, 4, 4}, 0.1);
    two.at(0, 1, 1) = 0.9;
    const auto seg = segmentation_map(two, 2);
    CHECK(seg.at(0, 0, 0) == 0.0);
    CHECK(seg.at(0, 1, 1) == 1.0);
    CHECK(seg.at(0, 3, 3) == 0.0);
}

TEST_CASE("diffusion loss") {
    const auto s = make_schedule();
    const auto z0 = random_array({4, 8, 8}, 8);
    RandomSource rng(9);
    const auto eps = gaussian_sample(rng, z0.shape());
    CHECK(diffusion_loss(ConstantPredictor(eps), z0, 10, eps, {}, s).value().item() == 0.0);
    double ms = 0.0;
    for (double v : eps.data()) ms += v * v;
    ms /= static_cast<double>(eps.size());
    CHECK(std::abs(diffusion_loss(ConstantPredictor(DenseArray()), z0, 10, eps, {}, s).value().item() - ms) < 1e-12);

    SUBCASE("gradient of a conditional denoiser") {
        DenoiserConfig cfg;
        cfg.latent_channels = 2;
        cfg.base_channels = 4;
        cfg.time_dim = 8;
        cfg.feature_channels = 3;
        cfg.slots = {{ConditionTag::hed, 1}, {ConditionTag::lowres, 3}};
        cfg.global_dim = 3;
        bool pre = false;
        SUBCASE("plain noise head") {}
        SUBCASE("preconditioned head") { pre = true; }
        cfg.preconditioned = pre;
        cfg.sigma_data = 0.3;
        Denoiser model(cfg);
        RandomSource prng(10);
        testing::randomize_parameters(model.parameters(), prng, 0.4);
        ConditionStack cond;
        cond.add(ConditionTag::hed, random_array({1, 16, 16}, 11));
        cond.set_global({0.3, -0.2, 0.5});
        const auto small = random_array({2, 8, 8}, 12);
        const auto e = gaussian_sample(prng, small.shape());
        auto loss = [&] { return diffusion_loss(model, small, 250, e, cond, s); };
        const auto report = testing::check_gradients(model.parameters(), loss, prng, 20);
        INFO(report.worst_location);
        CHECK(report.worst_relative_error < 1e-4);
    }
}

TEST_CASE("preconditioned head with a silent network") {
    const auto s = make_schedule();
    DenoiserConfig cfg;
    cfg.latent_channels = 2;
    cfg.base_channels = 4;
    cfg.preconditioned = true;
    cfg.sigma_data = 0.2;
    Denoiser model(cfg);
    for (auto& p : model.parameters())
        if (p.name().rfind("out.", 0) == 0) p.value().fill(0.0);
    const auto z = random_array({2, 8, 8}, 30, -1.0, 1.0);
    for (std::size_t t : {1ul, 40ul, 500ul, 1000ul}) {
        // x0_hat = c_skip z / sqrt(abar), so eps_hat = z (1 - c_skip) / sqrt(1 - abar).
        const double ab = s.alpha_bar[t], se2 = (1.0 - ab) / ab;
        const double c_skip = 0.04 / (se2 + 0.04);
        const auto eps = model.predict(Var(z), t, {}).value();
        double worst = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            worst = std::max(worst, std::abs(eps[i] - z[i] * (1.0 - c_skip) / std::sqrt(1.0 - ab)));
        CHECK(worst < 1e-9);
    }
    CHECK_THROWS_AS(model.predict(Var(z), 0, {}), ShapeError);
    auto bad = cfg;
    bad.sigma_data = 0.0;
    CHECK_THROWS_AS(Denoiser{bad}, ShapeError);
    const auto round = DenoiserConfig::from_json(cfg.to_json());
    CHECK(round.preconditioned);
    CHECK(round.sigma_data == 0.2);
}

TEST_CASE("zero convolutions make conditions inert at initialization") {
    DenoiserConfig cfg;
    cfg.latent_channels = 12;
    cfg.slots = {{ConditionTag::hed, 1}, {ConditionTag::seg, 1}, {ConditionTag::sketch, 1}, {ConditionTag::lowres, 3}};
    cfg.global_dim = 5;
    cfg.seed = 4;
    Denoiser model(cfg);
    const Var z(random_array({12, 16, 16}, 20, -1.0, 1.0));
    const auto plain = model.predict(z, 321, {}).value();

    std::vector<ConditionStack> stacks(4);
    stacks[0].add(ConditionTag::hed, random_array({1, 16, 16}, 21));
    stacks[1].add(ConditionTag::lowres, random_array({3, 32, 32}, 22));
    stacks[1].add(ConditionTag::seg, random_array({1, 32, 32}, 23));
    stacks[2].set_global({1.0, -2.0, 0.5, 3.0, 0.0});
    stacks[3] = stacks[1];
    stacks[3].add(ConditionTag::sketch, random_array({1, 32, 32}, 24, -5.0, 5.0));
    stacks[3].set_global({9.0, 9.0, 9.0, 9.0, 9.0});
    for (const auto& st : stacks) CHECK(model.predict(z, 321, st).value() == plain);

    SUBCASE("the contract is not vacuous") {
        RandomSource rng(25);
        testing::randomize_parameters(model.zero_parameters(), rng, 0.1);
        for (const auto& st : stacks) CHECK(max_abs_diff(model.predict(z, 321, st).value(), plain) > 1e-6);
    }
    SUBCASE("rejected conditions") {
        ConditionStack bad;
        bad.add(ConditionTag::mlsd, DenseArray({1, 16, 16}));
        CHECK_THROWS_AS(model.predict(z, 1, bad), DataError);
        ConditionStack wide;
        wide.add(ConditionTag::hed, DenseArray({2, 16, 16}));
        CHECK_THROWS_AS(model.predict(z, 1, wide), DataError);
        ConditionStack g;
        g.set_global({1.0});
        CHECK_THROWS_AS(model.predict(z, 1, g), DataError);
        CHECK_THROWS_AS(model.predict(Var(DenseArray({12, 6, 8})), 1, {}), ShapeError);
    }
}

TEST_CASE("sampling") {
    const auto s = make_schedule();
    SpaceToDepthCodec codec(2);
    const Shape image{3, 16, 16};

    SUBCASE("zero noise prediction rolls out analytically") {
        ConstantPredictor zero{DenseArray()};
        const auto out = sample(zero, s, 10, {}, codec, image, 77);
        RandomSource rng(77);
        auto expected = gaussian_sample(rng, codec.latent_shape(image));
        for (double& v : expected.data()) v /= std::sqrt(s.alpha_bar[1000]);
        expected = codec.decode(expected);
        double worst = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] / expected[i] - 1.0));
        CHECK(worst < 1e-12);
        CHECK(zero.visited == std::vector<std::size_t>{1000, 900, 800, 700, 600, 500, 400, 300, 200, 100});
    }
    SUBCASE("dense schedule") {
        const auto small = make_schedule(20, 1e-3, 5e-2);
        ConstantPredictor zero{DenseArray()};
        sample_latent(zero, small, 20, {}, {4, 4, 4}, 1);
        REQUIRE(zero.visited.size() == 20);
        for (std::size_t i = 0; i < 20; ++i) CHECK(zero.visited[i] == 20 - i);
    }
    SUBCASE("determinism") {
        DenoiserConfig cfg;
        cfg.latent_channels = 12;
        cfg.base_channels = 8;
        cfg.slots = {{ConditionTag::hed, 1}};
        Denoiser model(cfg);
        ConditionStack cond;
        cond.add(ConditionTag::hed, random_array({1, 16, 16}, 30));
        const auto a = sample(model, s, 5, cond, codec, image, 3);
        const auto b = sample(model, s, 5, cond, codec, image, 3);
        const auto c = sample(model, s, 5, cond, codec, image, 4);
        CHECK(a == b);
        CHECK(max_abs_diff(a, c) > 0.1);
    }
}

TEST_CASE("conditional training responds to its condition") {
    const auto s = make_schedule();
    SpaceToDepthCodec codec(2);
    std::vector<TrainingExample> examples;
    for (std::uint64_t i = 0; i < 8; ++i) {
        const auto im = disk_image(i);
        TrainingExample ex{codec.encode(im), {}};
        ex.conditions.add(ConditionTag::hed, sobel_edges(im));
        examples.push_back(std::move(ex));
    }
    DenoiserConfig cfg;
    cfg.latent_channels = 12;
    cfg.base_channels = 8;
    cfg.slots = {{ConditionTag::hed, 1}};
    Denoiser model(cfg);
    const auto draws = evaluation_draws(examples, s, 32, 5);
    const double before = evaluate_loss(model, s, examples, draws);
    DiffusionTrainConfig tc;
    tc.steps = 300;
    const auto trace = train_diffusion(model, s, examples, tc);
    CHECK(trace.size() == 300);
    CHECK(evaluate_loss(model, s, examples, draws) < before);

    const Var z(forward_noise(examples[0].latent, 50, draws[0].eps, s));
    const auto with = model.predict(z, 50, examples[0].conditions).value();
    const auto without = model.predict(z, 50, examples[0].conditions.without(ConditionTag::hed)).value();
    CHECK(max_abs_diff(with, without) > 1e-6);

    DiffusionTrainConfig again = tc;
    Denoiser twin(cfg);
    again.steps = 20;
    Denoiser first(cfg);
    CHECK(train_diffusion(first, s, examples, again) == train_diffusion(twin, s, examples, again));
}

TEST_CASE("dsrnet") {
    const auto s = make_schedule();
    SpaceToDepthCodec codec(2);
    Denoiser model(dsrnet_config(8, 1));
    const auto lr_a = random_array({3, 8, 8}, 40), lr_b = random_array({3, 8, 8}, 41);
    const auto a = dsrnet_super_resolve(lr_a, model, s, 5, 9, 2, codec);
    const auto b = dsrnet_super_resolve(lr_b, model, s, 5, 9, 2, codec);
    CHECK(a.shape() == Shape{3, 16, 16});
    // Untrained zero convolutions: the sampled residual ignores the input.
    auto residual = [](DenseArray out, const DenseArray& lr) {
        const auto up = lowres_condition(lr, 2);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= up[i];
        return out;
    };
    const auto ra = residual(a, lr_a), rb = residual(b, lr_b);
    double worst = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, std::abs(ra[i] - rb[i]));
    CHECK(worst < 1e-12);
    CHECK(dsrnet_super_resolve(lr_a, model, s, 5, 9, 4, codec).shape() == Shape{3, 32, 32});
    CHECK_THROWS_AS(dsrnet_super_resolve(lr_a, model, s, 5, 9, 3, codec), ShapeError);
}

TEST_CASE("dsrnet overfits one image") {
    const auto s = make_schedule();
    SpaceToDepthCodec codec(2);
    const auto hr = disk_image(50);
    const auto examples = dsrnet_examples({hr}, 2, codec);
    Denoiser model(dsrnet_config(16, 2));
    DiffusionTrainConfig tc;
    tc.steps = 1500;
    tc.learning_rate = 1e-3;
    train_diffusion(model, s, examples, tc);
    const auto out = dsrnet_super_resolve(area_downsample(hr, 2), model, s, 20, 3, 2, codec);
    const double quality = psnr(out, hr);
    MESSAGE("DSRNet overfit PSNR " << quality << " dB, bilinear "
                                   << psnr(lowres_condition(area_downsample(hr, 2), 2), hr) << " dB");
    CHECK(quality > 25.0);
}

TEST_CASE("two-stage augmentation yields 9 patches from a 256x256 cube") {
    const auto s = make_schedule();
    SpaceToDepthCodec codec(2);
    Denoiser dsr(dsrnet_config(4, 1));
    rgan::RganConfig rc;
    rc.bands = 6;
    rc.attention.window_h = {1, 2};
    rc.attention.window_v = {2, 1};
    rgan::RganModel rgan_model(rc);
    const auto wl = hsi::uniform_grid(420.0, 700.0, 6);
    std::vector<SourceCube> cubes{{"scene", testing::mixture_cube(256, 256, wl, 1)}};
    AugmentConfig ac;
    ac.sample_steps = 2;
    const auto result = augment_two_stage(cubes, dsr, codec, s, rgan_model, ac);
    CHECK(result.patches.size() == 9);
    CHECK(result.manifest["patches"].size() == 9);
    CHECK(result.manifest["patches"][4]["y"] == 128);
    CHECK(result.manifest["patches"][4]["x"] == 128);
    CHECK(result.manifest["sources"][0]["sr_height"] == 512);
    for (const auto& p : result.patches) {
        CHECK(p.source == "scene");
        CHECK(p.cube.height() == 256);
        CHECK(p.cube.bands() == 6);
    }
    rc.scale = 4;
    CHECK_THROWS_AS(augment_two_stage(cubes, dsr, codec, s, rgan::RganModel(rc), ac), DataError);
}
