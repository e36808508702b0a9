#include "spectragen/cli/app.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "spectragen/cli/manifest.hpp"
#include "spectragen/cli/preview.hpp"
#include "spectragen/diffusion/augment.hpp"
#include "spectragen/diffusion/codec.hpp"
#include "spectragen/diffusion/conditions.hpp"
#include "spectragen/diffusion/denoiser.hpp"
#include "spectragen/diffusion/dsrnet.hpp"
#include "spectragen/diffusion/training.hpp"
#include "spectragen/hsi/io.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/metrics/frechet.hpp"
#include "spectragen/metrics/image.hpp"
#include "spectragen/metrics/report.hpp"
#include "spectragen/metrics/spr.hpp"
#include "spectragen/numerics/checkpoint.hpp"
#include "spectragen/numerics/error.hpp"
#include "spectragen/rgan/model.hpp"

#ifndef SPECTRAGEN_VERSION
#define SPECTRAGEN_VERSION "unknown"
#endif

namespace spectragen::cli {

namespace {

namespace fs = std::filesystem;
using diffusion::ConditionTag;

struct Common {
    std::string out = "out";
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--threads", c.threads, "Worker threads; 0 falls back to SPECTRAGEN_THREADS, then all cores")
        ->capture_default_str();
    sub->footer("Any option can also be set in the file given to --config: INI, keys under a [" + sub->get_name() +
                "] section. Command-line values override the file.");
}

std::size_t resolve_threads(std::size_t flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("SPECTRAGEN_THREADS")) {
        char* end = nullptr;
        const auto v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string resolved_config(const CLI::App* sub) {
    return "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);
}

bool is_cube_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".hsc" || ext == ".hdr";
}

// Files stay as given; directories expand to their cube files in name order.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs, bool raw_sets = false) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                if (!e.is_regular_file()) continue;
                const auto& f = e.path();
                if (is_cube_file(f) || (raw_sets && f.extension() == ".f32")) found.push_back(f);
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p)) {
            out.push_back(p);
        } else {
            throw DataError("no such input: " + in);
        }
    }
    if (out.empty()) throw DataError("no input files");
    return out;
}

void check_unique_stems(const std::vector<fs::path>& files) {
    std::map<std::string, fs::path> seen;
    for (const auto& f : files) {
        const auto [it, fresh] = seen.emplace(f.stem().string(), f);
        if (!fresh) throw DataError("inputs " + it->second.string() + " and " + f.string() + " share a file stem");
    }
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::min(threads, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string indexed(const std::string& stem, std::size_t i, int width = 4) {
    std::ostringstream s;
    s << stem << '_' << std::setw(width) << std::setfill('0') << i;
    return s.str();
}

rgan::WindowShape parse_window(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used = 0;
        const auto h = std::stoul(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(text);
        const auto w = std::stoul(text.substr(x + 1), &used);
        if (used != text.size() - x - 1) throw std::invalid_argument(text);
        return {h, w};
    } catch (const std::logic_error&) {
        throw DataError("window must look like HxW, got '" + text + "'");
    }
}

void write_losses(const std::vector<double>& losses, const fs::path& path) {
    std::ofstream out(path);
    out << "step,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
    if (!out) throw DataError("cannot write " + path.string());
}

void add_checkpoint_inputs(RunRecord& record, const fs::path& ckpt) {
    record.add_input(ckpt);
    auto bin = ckpt;
    bin += ".bin";
    record.add_input(bin);
}

void add_checkpoint_outputs(RunRecord& record, const fs::path& ckpt) {
    record.add_output(ckpt);
    auto bin = ckpt;
    bin += ".bin";
    record.add_output(bin);
}

// ---- diffusion model cards -------------------------------------------------

DenseArray proxy_condition(ConditionTag tag, const DenseArray& image) {
    switch (tag) {
        case ConditionTag::hed: return diffusion::sobel_edges(image);
        case ConditionTag::sketch: return diffusion::sketch_map(image);
        case ConditionTag::seg: return diffusion::segmentation_map(image);
        default: throw DataError("no built-in proxy for condition '" + diffusion::to_string(tag) + "'");
    }
}

struct LoadedDenoiser {
    std::unique_ptr<diffusion::Denoiser> model;
    std::unique_ptr<diffusion::LatentCodec> codec;
    nlohmann::json card;
    std::string kind;
};

LoadedDenoiser load_denoiser_card(const fs::path& path, RunRecord& record) {
    const auto data = read_checkpoint(path);
    if (!data.config.contains("card")) throw DataError(path.string() + " was not written by train-diff");
    LoadedDenoiser out;
    out.card = data.config.at("card");
    out.model = std::make_unique<diffusion::Denoiser>(diffusion::load_denoiser(path, &out.kind));
    add_checkpoint_inputs(record, path);
    const auto kind = diffusion::codec_kind_from_string(out.card.at("codec").get<std::string>());
    if (kind == diffusion::CodecKind::tiny_ae) {
        const auto codec_path = path.parent_path() / out.card.at("codec_checkpoint").get<std::string>();
        out.codec = diffusion::load_codec(codec_path);
        add_checkpoint_inputs(record, codec_path);
    } else {
        out.codec = diffusion::make_codec(kind, out.card.value("codec_factor", std::size_t{2}));
    }
    return out;
}

std::vector<double> card_wavelengths(const nlohmann::json& card) {
    return card.at("wavelengths").get<std::vector<double>>();
}

// ---- subcommands -----------------------------------------------------------

struct AlignOptions {
    Common common;
    std::vector<std::string> inputs;
    double first_nm = 400.0, last_nm = 1000.0;
    std::size_t bands = 48;
};

void run_align(const AlignOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    const auto grid = hsi::uniform_grid(o.first_nm, o.last_nm, o.bands);
    std::vector<hsi::AlignResult> results(files.size());
    parallel_for(files.size(), resolve_threads(o.common.threads), [&](std::size_t i) {
        results[i] = hsi::align_to_covered_grid(hsi::read_cube(files[i]), grid);
        hsi::write_cube(results[i].cube, out / (files[i].stem().string() + ".hsc"));
    });
    RunRecord record("align", out, resolved_config(sub), o.common.seed);
    auto& list = record.details()["files"] = nlohmann::json::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto target = out / (files[i].stem().string() + ".hsc");
        record.add_input(files[i]);
        record.add_output(target);
        list.push_back({{"output", target.filename().string()},
                        {"bands", results[i].cube.bands()},
                        {"partial", results[i].partial}});
        if (results[i].partial) log << files[i].string() << ": source range covers only part of the grid\n";
    }
    record.write();
    log << "aligned " << files.size() << " cube(s) onto " << o.bands << " bands\n";
}

struct CropOptions {
    Common common;
    std::vector<std::string> inputs;
    std::size_t size = 256, stride = 128;
};

void run_crop(const CropOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    std::vector<hsi::PatchGrid> grids(files.size());
    parallel_for(files.size(), resolve_threads(o.common.threads), [&](std::size_t i) {
        auto set = hsi::crop_patches(hsi::read_cube(files[i]), o.size, o.stride);
        for (std::size_t p = 0; p < set.patches.size(); ++p)
            hsi::write_cube(set.patches[p], out / (indexed(files[i].stem().string(), p) + ".hsc"));
        grids[i] = std::move(set.grid);
    });
    RunRecord record("crop", out, resolved_config(sub), o.common.seed);
    auto& list = record.details()["patches"] = nlohmann::json::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        record.add_input(files[i]);
        for (std::size_t p = 0; p < grids[i].origins.size(); ++p) {
            const auto name = indexed(files[i].stem().string(), p) + ".hsc";
            record.add_output(out / name);
            list.push_back({{"file", name}, {"source", files[i].stem().string()}, {"y", grids[i].origins[p].y},
                            {"x", grids[i].origins[p].x}});
        }
        total += grids[i].origins.size();
    }
    record.write();
    log << "wrote " << total << " patch(es)\n";
}

struct DegradeOptions {
    Common common;
    std::vector<std::string> inputs;
    std::string kind = "noise";
    double sigma = 0.2;
    std::size_t factor = 4;
    bool no_clamp = false;
};

void run_degrade(const DegradeOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    for (std::size_t i = 0; i < files.size(); ++i) {
        hsi::DegradationSpec spec;
        spec.kind = o.kind == "noise" ? hsi::DegradationKind::gaussian_noise : hsi::DegradationKind::downsample;
        spec.sigma = o.sigma;
        spec.factor = o.factor;
        spec.seed = o.common.seed + i;
        spec.clamp = !o.no_clamp;
        hsi::write_cube(hsi::degrade(hsi::read_cube(files[i]), spec), out / (files[i].stem().string() + ".hsc"));
    }
    RunRecord record("degrade", out, resolved_config(sub), o.common.seed);
    for (const auto& f : files) {
        record.add_input(f);
        record.add_output(out / (f.stem().string() + ".hsc"));
    }
    record.write();
    log << "degraded " << files.size() << " cube(s)\n";
}

struct TrainRganOptions {
    Common common;
    std::vector<std::string> inputs;
    std::size_t scale = 2, steps = 200, channels = 8, heads = 1, layers = 2, qkv_kernel = 1, ffd_hidden = 16,
                spec_hidden = 4, warmup = 20;
    std::string window_h = "2x8", window_v = "8x2";
    double learning_rate = 5e-3, beta2 = 0.99, final_fraction = 0.3;
};

void run_train_rgan(const TrainRganOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    RunRecord record("train-rgan", out, resolved_config(sub), o.common.seed);
    std::vector<rgan::RganTrainingPair> pairs;
    for (const auto& f : files) {
        pairs.push_back(rgan::make_training_pair(hsi::read_cube(f), o.scale));
        record.add_input(f);
        if (pairs.back().target.bands() != pairs.front().target.bands()) throw DataError("inputs differ in band count");
    }
    rgan::RganConfig cfg;
    cfg.bands = pairs.front().target.bands();
    cfg.scale = o.scale;
    cfg.attention.channels = o.channels;
    cfg.attention.heads = o.heads;
    cfg.attention.window_h = parse_window(o.window_h);
    cfg.attention.window_v = parse_window(o.window_v);
    cfg.attention.qkv_kernel = o.qkv_kernel;
    cfg.layers = o.layers;
    cfg.ffd_hidden = o.ffd_hidden;
    cfg.spec_hidden = o.spec_hidden;
    cfg.seed = o.common.seed;
    rgan::RganModel model(cfg);
    rgan::RganTrainConfig tc;
    tc.steps = o.steps;
    tc.learning_rate = o.learning_rate;
    tc.beta2 = o.beta2;
    tc.warmup_steps = o.warmup;
    tc.final_fraction = o.final_fraction;
    tc.seed = o.common.seed;
    const auto trace = rgan::train_rgan(model, pairs, tc);
    rgan::save_rgan(model, out / "rgan.ckpt");
    write_losses(trace.losses, out / "losses.csv");
    add_checkpoint_outputs(record, out / "rgan.ckpt");
    record.add_output(out / "losses.csv");
    record.details()["model"] = cfg.to_json();
    if (!trace.losses.empty()) {
        record.details()["initial_loss"] = trace.losses.front();
        record.details()["final_loss"] = trace.losses.back();
    }
    record.write();
    log << "trained RGAN for " << o.steps << " steps";
    if (!trace.losses.empty()) log << ", loss " << trace.losses.front() << " -> " << trace.losses.back();
    log << '\n';
}

struct SrOptions {
    Common common;
    std::string model;
    std::vector<std::string> inputs;
    std::string guide;
    std::string dsrnet;
    std::size_t sample_steps = 10;
};

void run_sr(const SrOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    if (o.guide.empty() == o.dsrnet.empty()) throw DataError("give exactly one of --guide and --dsrnet");
    if (!o.guide.empty() && files.size() != 1) throw DataError("--guide pairs with exactly one input cube");
    const fs::path out(o.common.out);
    fs::create_directories(out);
    RunRecord record("sr", out, resolved_config(sub), o.common.seed);
    const auto model = rgan::load_rgan(o.model);
    add_checkpoint_inputs(record, o.model);
    std::optional<LoadedDenoiser> dsr;
    if (!o.dsrnet.empty()) {
        dsr = load_denoiser_card(o.dsrnet, record);
        if (dsr->kind != "dsrnet") throw DataError(o.dsrnet + " is not a DSRNet checkpoint");
    }
    const auto schedule = dsr ? dsr->model->config().schedule() : diffusion::make_schedule();
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto lr = hsi::read_cube(files[i]);
        record.add_input(files[i]);
        hsi::HsiCube guide;
        if (dsr) {
            const auto rgb = hsi::extract_rgb(lr);
            auto up = diffusion::dsrnet_super_resolve(rgb.cube.values(), *dsr->model, schedule, o.sample_steps,
                                                      o.common.seed + i, model.config().scale, *dsr->codec);
            for (double& v : up.data()) v = std::clamp(v, 0.0, 1.0);
            guide = hsi::HsiCube(rgb.cube.wavelengths(), std::move(up));
        } else {
            guide = hsi::read_cube(o.guide);
            record.add_input(o.guide);
        }
        const auto target = out / (files[i].stem().string() + "_sr.hsc");
        hsi::write_cube(rgan::rgan_forward(lr, guide, model), target);
        record.add_output(target);
    }
    record.write();
    log << "super-resolved " << files.size() << " cube(s) at scale " << model.config().scale << '\n';
}

struct TrainDiffOptions {
    Common common;
    std::vector<std::string> inputs;
    std::string mode = "denoiser";
    std::string codec = "space_to_depth";
    std::size_t latent_channels = 4, ae_steps = 300;
    double ae_learning_rate = 1e-2;
    std::vector<std::string> conditions;
    std::size_t steps = 2000, batch = 1, base_channels = 16, time_dim = 16, feature_channels = 8, scale = 2;
    std::size_t eval_draws = 64;
    double learning_rate = 1e-3;
};

void run_train_diff(const TrainDiffOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    RunRecord record("train-diff", out, resolved_config(sub), o.common.seed);
    std::vector<hsi::HsiCube> cubes;
    for (const auto& f : files) {
        cubes.push_back(hsi::read_cube(f));
        record.add_input(f);
        if (cubes.back().wavelengths() != cubes.front().wavelengths()) throw DataError("inputs differ in wavelengths");
    }
    const bool dsr = o.mode == "dsrnet";
    std::vector<DenseArray> images;
    std::vector<double> wavelengths = cubes.front().wavelengths();
    for (const auto& c : cubes) {
        if (dsr) {
            auto rgb = hsi::extract_rgb(c);
            wavelengths = rgb.cube.wavelengths();
            images.push_back(rgb.cube.values());
        } else {
            images.push_back(c.values());
        }
    }
    const std::size_t channels = images.front().extent(0);

    nlohmann::json card = {{"mode", o.mode}, {"codec", o.codec}, {"codec_factor", 2}, {"image_channels", channels},
                           {"wavelengths", wavelengths}, {"conditions", nlohmann::json::array()}};
    std::unique_ptr<diffusion::LatentCodec> codec;
    const auto codec_kind = diffusion::codec_kind_from_string(o.codec);
    if (dsr && codec_kind != diffusion::CodecKind::space_to_depth) throw DataError("dsrnet mode uses the space_to_depth codec");
    if (codec_kind == diffusion::CodecKind::tiny_ae) {
        auto ae = std::make_unique<diffusion::TinyAutoencoder>(channels, o.latent_channels, 2, o.common.seed);
        const auto ae_losses = diffusion::train_autoencoder(*ae, images, o.ae_steps, o.ae_learning_rate, o.common.seed);
        diffusion::save_codec(*ae, out / "codec.ckpt");
        add_checkpoint_outputs(record, out / "codec.ckpt");
        card["codec_checkpoint"] = "codec.ckpt";
        if (!ae_losses.empty()) record.details()["codec_final_loss"] = ae_losses.back();
        codec = std::move(ae);
    } else {
        codec = diffusion::make_codec(codec_kind, 2);
    }

    std::vector<diffusion::TrainingExample> examples;
    diffusion::DenoiserConfig cfg;
    if (dsr) {
        if (!o.conditions.empty()) throw DataError("dsrnet mode is conditioned on the low-resolution input only");
        cfg = diffusion::dsrnet_config(o.base_channels, o.common.seed);
        cfg.time_dim = o.time_dim;
        cfg.feature_channels = o.feature_channels;
        examples = diffusion::dsrnet_examples(images, o.scale, *codec);
        card["scale"] = o.scale;
    } else {
        cfg.latent_channels = codec->latent_shape(images.front().shape())[0];
        cfg.base_channels = o.base_channels;
        cfg.time_dim = o.time_dim;
        cfg.feature_channels = o.feature_channels;
        cfg.seed = o.common.seed;
        std::vector<ConditionTag> tags;
        for (const auto& name : o.conditions) {
            tags.push_back(diffusion::condition_tag_from_string(name));
            cfg.slots.push_back({tags.back(), 1});
            card["conditions"].push_back(name);
        }
        for (const auto& im : images) {
            diffusion::TrainingExample ex{codec->encode(im), {}};
            for (auto tag : tags) ex.conditions.add(tag, proxy_condition(tag, im));
            examples.push_back(std::move(ex));
        }
    }
    diffusion::Denoiser model(cfg);
    const auto schedule = cfg.schedule();
    const auto draws = diffusion::evaluation_draws(examples, schedule, o.eval_draws, o.common.seed);
    const double before = diffusion::evaluate_loss(model, schedule, examples, draws);
    diffusion::DiffusionTrainConfig tc;
    tc.steps = o.steps;
    tc.batch = o.batch;
    tc.learning_rate = o.learning_rate;
    tc.seed = o.common.seed;
    const auto losses = diffusion::train_diffusion(model, schedule, examples, tc);
    const double after = diffusion::evaluate_loss(model, schedule, examples, draws);

    auto ckpt_config = model.config().to_json();
    ckpt_config["card"] = card;
    save_checkpoint(out / "model.ckpt", dsr ? "dsrnet" : "denoiser", ckpt_config, model.parameters());
    write_losses(losses, out / "losses.csv");
    add_checkpoint_outputs(record, out / "model.ckpt");
    record.add_output(out / "losses.csv");
    record.details()["eval_loss_initial"] = before;
    record.details()["eval_loss_final"] = after;
    record.details()["eval_draws"] = o.eval_draws;
    record.write();
    log << "trained " << o.mode << " for " << o.steps << " steps, held-draw loss " << before << " -> " << after
        << '\n';
}

struct SampleOptions {
    Common common;
    std::string model;
    std::size_t steps = 50, count = 1, height = 0, width = 0;
    std::string condition_source;
    std::vector<std::string> conditions;  // tag=path
};

void run_sample(const SampleOptions& o, const CLI::App* sub, std::ostream& log) {
    const fs::path out(o.common.out);
    fs::create_directories(out);
    RunRecord record("sample", out, resolved_config(sub), o.common.seed);
    auto loaded = load_denoiser_card(o.model, record);
    if (loaded.kind == "dsrnet") throw DataError("DSRNet checkpoints are used through `sr --dsrnet` or `augment`");
    std::size_t height = o.height, width = o.width;
    std::optional<hsi::HsiCube> source;
    if (!o.condition_source.empty()) {
        source = hsi::read_cube(o.condition_source);
        record.add_input(o.condition_source);
        if (height == 0) height = source->height();
        if (width == 0) width = source->width();
    }
    if (height == 0 || width == 0) throw DataError("give --height and --width or a --condition-source");

    diffusion::ConditionStack stack;
    for (const auto& spec : o.conditions) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw DataError("--condition expects tag=path, got '" + spec + "'");
        const auto path = spec.substr(eq + 1);
        stack.add(diffusion::condition_tag_from_string(spec.substr(0, eq)), hsi::read_cube(path).values());
        record.add_input(path);
    }
    for (const auto& name : loaded.card.at("conditions")) {
        const auto tag = diffusion::condition_tag_from_string(name.get<std::string>());
        if (stack.find(tag)) continue;
        if (!source) throw DataError("condition '" + name.get<std::string>() + "' needs --condition or --condition-source");
        stack.add(tag, proxy_condition(tag, source->values()));
    }

    const auto wavelengths = card_wavelengths(loaded.card);
    const Shape image_shape{wavelengths.size(), height, width};
    const auto schedule = loaded.model->config().schedule();
    for (std::size_t i = 0; i < o.count; ++i) {
        auto image =
            diffusion::sample(*loaded.model, schedule, o.steps, stack, *loaded.codec, image_shape, o.common.seed + i);
        const auto target = out / (indexed("sample", i, 3) + ".hsc");
        hsi::write_cube(hsi::HsiCube(wavelengths, std::move(image)), target);
        record.add_output(target);
    }
    record.details()["conditions"] = stack.tags();
    record.write();
    log << "sampled " << o.count << " cube(s) of " << height << "x" << width << " in " << o.steps << " steps\n";
}

struct AugmentOptions {
    Common common;
    std::vector<std::string> inputs;
    std::string dsrnet, rgan_model;
    std::size_t scale = 2, patch_size = 256, stride = 128, sample_steps = 10;
};

void run_augment(const AugmentOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    const fs::path out(o.common.out);
    fs::create_directories(out / "patches");
    RunRecord record("augment", out, resolved_config(sub), o.common.seed);
    auto dsr = load_denoiser_card(o.dsrnet, record);
    if (dsr.kind != "dsrnet") throw DataError(o.dsrnet + " is not a DSRNet checkpoint");
    const auto model = rgan::load_rgan(o.rgan_model);
    add_checkpoint_inputs(record, o.rgan_model);
    std::vector<diffusion::SourceCube> sources;
    for (const auto& f : files) {
        sources.push_back({f.stem().string(), hsi::read_cube(f)});
        record.add_input(f);
    }
    diffusion::AugmentConfig cfg;
    cfg.scale = o.scale;
    cfg.patch_size = o.patch_size;
    cfg.stride = o.stride;
    cfg.sample_steps = o.sample_steps;
    cfg.seed = o.common.seed;
    auto result =
        diffusion::augment_two_stage(sources, *dsr.model, *dsr.codec, dsr.model->config().schedule(), model, cfg);
    auto manifest = result.manifest;
    for (std::size_t p = 0; p < result.patches.size(); ++p) {
        const auto name = "patches/" + indexed(result.patches[p].source, p) + ".hsc";
        hsi::write_cube(result.patches[p].cube, out / name);
        record.add_output(out / name);
        manifest["patches"][p]["file"] = name;
    }
    record.details() = manifest;
    record.write();
    log << "two-stage augmentation wrote " << result.patches.size() << " patch(es)\n";
}

struct EvalOptions {
    Common common;
    std::vector<std::string> real, generated;
    std::size_t k = 10, samples = 100000, groups = 10;
    bool paired = false;
    std::string features_real, features_generated;
};

metrics::SpectralSet load_sets(const std::vector<fs::path>& files, metrics::SetSource source, std::size_t threads) {
    std::vector<metrics::SpectralSet> parts(files.size());
    parallel_for(files.size(), threads, [&](std::size_t i) { parts[i] = metrics::load_spectral_set(files[i], source); });
    std::vector<double> values;
    std::size_t rows = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].bands() != parts.front().bands()) throw DataError(files[i].string() + ": band count differs");
        values.insert(values.end(), parts[i].values().begin(), parts[i].values().end());
        rows += parts[i].rows();
    }
    return metrics::SpectralSet(rows, parts.front().bands(), std::move(values), source);
}

void run_eval(const EvalOptions& o, const CLI::App* sub, std::ostream& out_stream, std::ostream& log) {
    const auto real_files = expand_inputs(o.real, true), gen_files = expand_inputs(o.generated, true);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    const std::size_t threads = resolve_threads(o.common.threads);
    RunRecord record("eval", out, resolved_config(sub), o.common.seed);
    for (const auto& f : real_files) record.add_input(f);
    for (const auto& f : gen_files) record.add_input(f);

    const auto real = load_sets(real_files, metrics::SetSource::real, threads);
    const auto gen = load_sets(gen_files, metrics::SetSource::generated, threads);
    metrics::SprConfig cfg;
    cfg.k = o.k;
    cfg.sample_count = o.samples;
    cfg.group_count = o.groups;
    cfg.seed = o.common.seed;
    cfg.threads = threads;
    const auto spr = metrics::spr_srec(real, gen, cfg);
    const std::size_t used = spr.groups.size();
    const std::size_t samples = std::min({o.samples, real.rows(), gen.rows()});
    std::vector<metrics::MetricRow> rows{{"sPr", spr.precision, o.k, samples, used, o.common.seed},
                                         {"sRec", spr.recall, o.k, samples, used, o.common.seed}};

    if (o.paired) {
        if (real_files.size() != gen_files.size()) throw DataError("--paired needs as many generated as real cubes");
        double p = 0.0, s = 0.0, a = 0.0;
        bool ssim_ok = true;
        for (std::size_t i = 0; i < real_files.size(); ++i) {
            const auto x = hsi::read_cube(gen_files[i]), ref = hsi::read_cube(real_files[i]);
            p += metrics::psnr(x, ref);
            a += metrics::mean_sam(x, ref);
            if (x.height() >= 11 && x.width() >= 11) {
                s += metrics::ssim(x, ref);
            } else {
                ssim_ok = false;
            }
        }
        const double n = static_cast<double>(real_files.size());
        rows.push_back({"psnr", p / n, 0, real_files.size(), 0, o.common.seed});
        if (ssim_ok) rows.push_back({"ssim", s / n, 0, real_files.size(), 0, o.common.seed});
        rows.push_back({"sam", a / n, 0, real_files.size(), 0, o.common.seed});
    }
    if (o.features_real.empty() != o.features_generated.empty()) {
        throw DataError("give both --features-real and --features-gen");
    }
    if (!o.features_real.empty()) {
        auto as_matrix = [](const metrics::SpectralSet& s) {
            metrics::FeatureSet f(static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.bands()));
            for (std::size_t i = 0; i < s.rows(); ++i)
                for (std::size_t j = 0; j < s.bands(); ++j) f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.row(i)[j];
            return f;
        };
        const auto fa = metrics::load_spectral_set(o.features_real), fb = metrics::load_spectral_set(o.features_generated);
        record.add_input(o.features_real);
        record.add_input(o.features_generated);
        rows.push_back({"frechet", metrics::frechet_distance(as_matrix(fa), as_matrix(fb)), 0,
                        std::min(fa.rows(), fb.rows()), 0, o.common.seed});
    }
    metrics::write_metric_csv(rows, out / "metrics.csv");
    record.add_output(out / "metrics.csv");
    record.write();
    out_stream << metrics::metric_csv(rows);
    log << "evaluated " << real.rows() << " real and " << gen.rows() << " generated profiles\n";
}

struct PreviewOptions {
    Common common;
    std::vector<std::string> inputs;
};

void run_preview(const PreviewOptions& o, const CLI::App* sub, std::ostream& log) {
    const auto files = expand_inputs(o.inputs);
    check_unique_stems(files);
    const fs::path out(o.common.out);
    fs::create_directories(out);
    RunRecord record("preview", out, resolved_config(sub), o.common.seed);
    for (const auto& f : files) {
        const auto target = out / (f.stem().string() + ".ppm");
        write_ppm_preview(hsi::read_cube(f), target);
        record.add_input(f);
        record.add_output(target);
    }
    record.write();
    log << "wrote " << files.size() << " preview(s)\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hyperspectral generation toolkit: data preparation, guided super-resolution, latent diffusion and "
                 "spectral metrics.",
                 "spectragen"};
    app.set_config("--config", "", "INI file with one [subcommand] section of key = value lines");
    app.fallthrough();
    app.allow_config_extras(false);
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", SPECTRAGEN_VERSION);

    AlignOptions align;
    auto* align_cmd = app.add_subcommand("align", "Resample cubes onto a uniform wavelength grid");
    align_cmd->add_option("--input", align.inputs, "Cube files or directories")->required();
    align_cmd->add_option("--first-nm", align.first_nm, "First grid wavelength")->capture_default_str();
    align_cmd->add_option("--last-nm", align.last_nm, "Last grid wavelength")->capture_default_str();
    align_cmd->add_option("--bands", align.bands, "Grid size")->capture_default_str();
    add_common(align_cmd, align.common);

    CropOptions crop;
    auto* crop_cmd = app.add_subcommand("crop", "Cut cubes into square patches");
    crop_cmd->add_option("--input", crop.inputs, "Cube files or directories")->required();
    crop_cmd->add_option("--size", crop.size, "Patch edge length")->capture_default_str();
    crop_cmd->add_option("--stride", crop.stride, "Step between patch origins")->capture_default_str();
    add_common(crop_cmd, crop.common);

    DegradeOptions degrade;
    auto* degrade_cmd = app.add_subcommand("degrade", "Add Gaussian noise or area-downsample cubes");
    degrade_cmd->add_option("--input", degrade.inputs, "Cube files or directories")->required();
    degrade_cmd->add_option("--kind", degrade.kind, "noise or downsample")
        ->check(CLI::IsMember({"noise", "downsample"}))
        ->capture_default_str();
    degrade_cmd->add_option("--sigma", degrade.sigma, "Noise standard deviation")->capture_default_str();
    degrade_cmd->add_option("--factor", degrade.factor, "Downsampling factor")->capture_default_str();
    degrade_cmd->add_flag("--no-clamp", degrade.no_clamp, "Keep noisy values outside [0, 1]");
    add_common(degrade_cmd, degrade.common);

    TrainRganOptions tr;
    auto* tr_cmd = app.add_subcommand("train-rgan", "Train the guided super-resolution network on HR cubes");
    tr_cmd->add_option("--input", tr.inputs, "HR cube files or directories")->required();
    tr_cmd->add_option("--scale", tr.scale, "Upscaling factor, 2 or 4")->check(CLI::IsMember({2, 4}))->capture_default_str();
    tr_cmd->add_option("--steps", tr.steps, "Optimizer steps")->capture_default_str();
    tr_cmd->add_option("--lr", tr.learning_rate, "Peak learning rate")->capture_default_str();
    tr_cmd->add_option("--warmup", tr.warmup, "Linear warmup steps")->capture_default_str();
    tr_cmd->add_option("--final-fraction", tr.final_fraction, "Learning rate at the end, relative to the peak")
        ->capture_default_str();
    tr_cmd->add_option("--beta2", tr.beta2, "Adam second-moment decay")->capture_default_str();
    tr_cmd->add_option("--channels", tr.channels, "Feature channels")->capture_default_str();
    tr_cmd->add_option("--heads", tr.heads, "Attention heads")->capture_default_str();
    tr_cmd->add_option("--window-h", tr.window_h, "Horizontal window HxW")->capture_default_str();
    tr_cmd->add_option("--window-v", tr.window_v, "Vertical window HxW")->capture_default_str();
    tr_cmd->add_option("--qkv-kernel", tr.qkv_kernel, "Odd kernel of the QKV projection")->capture_default_str();
    tr_cmd->add_option("--layers", tr.layers, "Guided attention layers")->capture_default_str();
    tr_cmd->add_option("--ffd-hidden", tr.ffd_hidden, "Feed-forward hidden width")->capture_default_str();
    tr_cmd->add_option("--spec-hidden", tr.spec_hidden, "Spectral attention hidden width")->capture_default_str();
    add_common(tr_cmd, tr.common);

    SrOptions sr;
    auto* sr_cmd = app.add_subcommand("sr", "Super-resolve LR cubes with a trained RGAN");
    sr_cmd->add_option("--model", sr.model, "RGAN checkpoint")->required();
    sr_cmd->add_option("--input", sr.inputs, "LR cube files or directories")->required();
    sr_cmd->add_option("--guide", sr.guide, "HR RGB guide cube (3 bands), for a single input");
    sr_cmd->add_option("--dsrnet", sr.dsrnet, "DSRNet checkpoint that produces the guide from the LR RGB bands");
    sr_cmd->add_option("--sample-steps", sr.sample_steps, "DDIM steps for DSRNet")->capture_default_str();
    add_common(sr_cmd, sr.common);

    TrainDiffOptions td;
    auto* td_cmd = app.add_subcommand("train-diff", "Train a latent denoiser or a DSRNet");
    td_cmd->add_option("--input", td.inputs, "Training cube files or directories")->required();
    td_cmd->add_option("--mode", td.mode, "denoiser (cube latents) or dsrnet (RGB super-resolution)")
        ->check(CLI::IsMember({"denoiser", "dsrnet"}))
        ->capture_default_str();
    td_cmd->add_option("--codec", td.codec, "identity, space_to_depth or tiny_ae")
        ->check(CLI::IsMember({"identity", "space_to_depth", "tiny_ae"}))
        ->capture_default_str();
    td_cmd->add_option("--latent-channels", td.latent_channels, "tiny_ae latent channels")->capture_default_str();
    td_cmd->add_option("--ae-steps", td.ae_steps, "tiny_ae training steps")->capture_default_str();
    td_cmd->add_option("--ae-lr", td.ae_learning_rate, "tiny_ae learning rate")->capture_default_str();
    td_cmd->add_option("--conditions", td.conditions, "Proxy conditions computed from each image: hed, sketch, seg")
        ->check(CLI::IsMember({"hed", "sketch", "seg"}));
    td_cmd->add_option("--steps", td.steps, "Optimizer steps")->capture_default_str();
    td_cmd->add_option("--batch", td.batch, "Examples per step")->capture_default_str();
    td_cmd->add_option("--lr", td.learning_rate, "Learning rate")->capture_default_str();
    td_cmd->add_option("--base-channels", td.base_channels, "Denoiser width")->capture_default_str();
    td_cmd->add_option("--time-dim", td.time_dim, "Timestep embedding width")->capture_default_str();
    td_cmd->add_option("--feature-channels", td.feature_channels, "Condition encoder width")->capture_default_str();
    td_cmd->add_option("--scale", td.scale, "dsrnet upscaling factor, 2 or 4")->check(CLI::IsMember({2, 4}))->capture_default_str();
    td_cmd->add_option("--eval-draws", td.eval_draws, "Fixed noise draws for the before/after loss")->capture_default_str();
    add_common(td_cmd, td.common);

    SampleOptions sm;
    auto* sm_cmd = app.add_subcommand("sample", "Draw cubes from a trained denoiser with DDIM");
    sm_cmd->add_option("--model", sm.model, "Checkpoint written by train-diff")->required();
    sm_cmd->add_option("--steps", sm.steps, "DDIM steps")->capture_default_str();
    sm_cmd->add_option("--count", sm.count, "Number of samples; sample i uses seed + i")->capture_default_str();
    sm_cmd->add_option("--height", sm.height, "Output height (default: condition source)")->capture_default_str();
    sm_cmd->add_option("--width", sm.width, "Output width (default: condition source)")->capture_default_str();
    sm_cmd->add_option("--condition-source", sm.condition_source, "Cube from which missing proxy conditions are computed");
    sm_cmd->add_option("--condition", sm.conditions, "Explicit condition map as tag=cube-path");
    add_common(sm_cmd, sm.common);

    AugmentOptions ag;
    auto* ag_cmd = app.add_subcommand("augment", "Two-stage super-resolution (DSRNet, then RGAN) and cropping");
    ag_cmd->add_option("--input", ag.inputs, "Cube files or directories")->required();
    ag_cmd->add_option("--dsrnet", ag.dsrnet, "DSRNet checkpoint from train-diff --mode dsrnet")->required();
    ag_cmd->add_option("--rgan", ag.rgan_model, "RGAN checkpoint from train-rgan")->required();
    ag_cmd->add_option("--scale", ag.scale, "Upscaling factor, 2 or 4")->check(CLI::IsMember({2, 4}))->capture_default_str();
    ag_cmd->add_option("--patch-size", ag.patch_size, "Patch edge length")->capture_default_str();
    ag_cmd->add_option("--stride", ag.stride, "Step between patch origins")->capture_default_str();
    ag_cmd->add_option("--sample-steps", ag.sample_steps, "DDIM steps for DSRNet")->capture_default_str();
    add_common(ag_cmd, ag.common);

    EvalOptions ev;
    auto* ev_cmd = app.add_subcommand("eval", "Spectral precision/recall and image metrics to CSV");
    ev_cmd->add_option("--real", ev.real, "Real cubes or raw spectral sets (files or directories)")->required();
    ev_cmd->add_option("--gen", ev.generated, "Generated cubes or raw spectral sets")->required();
    ev_cmd->add_option("--k", ev.k, "Neighbour rank")->capture_default_str();
    ev_cmd->add_option("--samples", ev.samples, "Profiles sampled per side")->capture_default_str();
    ev_cmd->add_option("--groups", ev.groups, "Aligned groups to average over")->capture_default_str();
    ev_cmd->add_flag("--paired", ev.paired, "Also report PSNR, SSIM and SAM over name-ordered cube pairs");
    ev_cmd->add_option("--features-real", ev.features_real, "Raw n x D feature matrix for the Frechet distance");
    ev_cmd->add_option("--features-gen", ev.features_generated, "Raw n x D feature matrix for the Frechet distance");
    add_common(ev_cmd, ev.common);

    PreviewOptions pv;
    auto* pv_cmd = app.add_subcommand("preview", "Write min-max stretched RGB previews as PPM images");
    pv_cmd->add_option("--input", pv.inputs, "Cube files or directories")->required();
    add_common(pv_cmd, pv.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::CallForVersion&) {
        out << SPECTRAGEN_VERSION << '\n';
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        // Help requested on a subcommand arrives here with a zero exit code.
        if (e.get_exit_code() == 0) {
            for (auto* sub : app.get_subcommands()) {
                out << sub->help();
                return kSuccess;
            }
            out << app.help();
            return kSuccess;
        }
        err << "spectragen: " << e.what() << "\nRun with --help for usage.\n";
        return kUsageError;
    }

    try {
        if (align_cmd->parsed()) run_align(align, align_cmd, err);
        else if (crop_cmd->parsed()) run_crop(crop, crop_cmd, err);
        else if (degrade_cmd->parsed()) run_degrade(degrade, degrade_cmd, err);
        else if (tr_cmd->parsed()) run_train_rgan(tr, tr_cmd, err);
        else if (sr_cmd->parsed()) run_sr(sr, sr_cmd, err);
        else if (td_cmd->parsed()) run_train_diff(td, td_cmd, err);
        else if (sm_cmd->parsed()) run_sample(sm, sm_cmd, err);
        else if (ag_cmd->parsed()) run_augment(ag, ag_cmd, err);
        else if (ev_cmd->parsed()) run_eval(ev, ev_cmd, out, err);
        else if (pv_cmd->parsed()) run_preview(pv, pv_cmd, err);
    } catch (const NumericalError& e) {
        err << "spectragen: numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "spectragen: " << e.what() << '\n';
        return kDataError;
    }
    return kSuccess;
}

}  // namespace spectragen::cli
