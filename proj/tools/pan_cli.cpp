// Batch command-line front end: cost analysis, dataset preparation, training,
// inference, evaluation and gradient checking.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "pan/analysis.hpp"
#include "pan/gradcheck.hpp"
#include "pan/io_util.hpp"
#include "pan/train.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct ModelFlags {
    int scale = 4;
    std::string block_type = "scpa";
    int num_blocks = -1;  // -1 = default for the block type
    int nf = 40;
    int unf = 24;
    bool no_pa_scpa = false;
    bool no_pa_upa = false;

    pan::ModelConfig to_config() const {
        pan::ModelConfig cfg;
        cfg.scale = scale;
        cfg.block_type = pan::block_type_from_string(block_type);
        cfg.num_blocks = num_blocks >= 0
                             ? num_blocks
                             : (cfg.block_type == pan::BlockType::SCPA ? 16 : 8);
        cfg.nf = nf;
        cfg.unf = unf;
        cfg.pa_in_scpa = !no_pa_scpa;
        cfg.pa_in_upa = !no_pa_upa;
        cfg.validate();
        return cfg;
    }
};

void add_model_flags(CLI::App* cmd, ModelFlags& mf) {
    cmd->add_option("--scale", mf.scale, "upscaling factor (2, 3 or 4)");
    cmd->add_option("--block-type", mf.block_type, "scpa|rb|rb_ca|rb_sa|rb_pa");
    cmd->add_option("--blocks", mf.num_blocks, "trunk block count (default 16 scpa / 8 rb)");
    cmd->add_option("--nf", mf.nf, "trunk width");
    cmd->add_option("--unf", mf.unf, "reconstruction width");
    cmd->add_flag("--no-pa-scpa", mf.no_pa_scpa, "drop pixel attention inside trunk blocks");
    cmd->add_flag("--no-pa-upa", mf.no_pa_upa, "drop pixel attention in the upsampling blocks");
}

std::pair<int, int> parse_resolution(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw pan::ConfigError("expected WxH, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw pan::ConfigError("expected WxH, got '" + s + "'");
    }
}

int run_analyze(const ModelFlags& mf, const std::string& hr_res, const std::string& out,
                bool summary) {
    const pan::ModelConfig cfg = mf.to_config();
    const auto st = pan::build_structure(cfg);
    const auto [w, h] = parse_resolution(hr_res);
    const auto report = pan::cost_report(st, w, h);

    std::printf("model: pan_x%d (%s x%d, nf=%d, unf=%d)\n", cfg.scale,
                pan::to_string(cfg.block_type).c_str(), cfg.num_blocks, cfg.nf, cfg.unf);
    std::printf("params: %lld\n", static_cast<long long>(report.total_params));
    std::printf("mult_adds: %lld (%.3fG @%dx%d)\n",
                static_cast<long long>(report.total_mult_adds),
                double(report.total_mult_adds) / 1e9, w, h);
    if (summary) std::fputs(pan::model_summary(st).c_str(), stdout);
    if (!out.empty()) pan::write_ledger_csv(report, out);
    return 0;
}

int run_degrade(const std::string& hr_dir, int scale, const std::string& out_dir) {
    const auto manifest = pan::degrade(hr_dir, scale, out_dir);
    std::printf("degraded %zu images at scale %d -> %s\n", manifest.entries.size(), scale,
                out_dir.c_str());
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_manifest,
              const std::string& out_dir, const std::string& resume, std::uint64_t build_seed) {
    pan::ModelConfig mc;
    pan::TrainConfig tc;
    pan::parse_config_echo(pan::read_file(config_path), mc, tc);
    mc.validate();
    tc.validate();

    const auto manifest = pan::load_manifest(data_manifest);
    if (manifest.scale != mc.scale)
        throw pan::DataError("manifest scale " + std::to_string(manifest.scale) +
                             " does not match model scale " + std::to_string(mc.scale));
    const auto data_dir = std::filesystem::path(data_manifest).parent_path();

    auto model = pan::build_pan<float>(mc, build_seed ? build_seed : tc.seed);
    std::printf("training pan_x%d (%lld params) for %lld iterations\n", mc.scale,
                static_cast<long long>(model.param_count()),
                static_cast<long long>(tc.total_iters));
    const auto r = pan::train(model, manifest, data_dir, tc, out_dir,
                              std::filesystem::path(resume));
    std::printf("final: iter=%lld loss=%.6f eval_psnr=%.3f checkpoint=%s\n",
                static_cast<long long>(r.iterations), r.final_loss, r.eval_psnr,
                r.final_checkpoint.string().c_str());
    return 0;
}

pan::PanModel model_from_checkpoint(const std::filesystem::path& ckpt_path, int expect_scale) {
    const pan::Checkpoint ck = pan::load_checkpoint(ckpt_path);
    pan::ModelConfig mc;
    pan::TrainConfig tc;
    pan::parse_config_echo(ck.config_echo, mc, tc);
    if (expect_scale > 0 && expect_scale != mc.scale)
        throw pan::DataError("checkpoint was trained at scale " + std::to_string(mc.scale) +
                             ", requested " + std::to_string(expect_scale));
    auto model = pan::build_pan<float>(mc, 0);
    auto adam = pan::AdamState::zeros_like(model);
    pan::restore(ck, model, adam);
    return model;
}

int run_infer(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
              int scale) {
    auto model = model_from_checkpoint(ckpt, scale);
    const pan::ImageBuffer lr = pan::load_png(in_path);
    pan::Tape tape;
    tape.set_recording(false);
    const auto sr = model.forward(tape, pan::image_to_tensor(lr));
    pan::save_png(out_path, pan::tensor_to_image(*sr));
    std::printf("wrote %s (%dx%d)\n", out_path.c_str(), sr->shape.w, sr->shape.h);
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& hr_dir, const std::string& lr_dir,
             int shave_override) {
    auto model = model_from_checkpoint(ckpt, 0);
    const int scale = model.config().scale;
    const int shave = shave_override >= 0 ? shave_override : scale;

    namespace fs = std::filesystem;
    std::vector<fs::path> hr_files;
    for (const auto& e : fs::directory_iterator(hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") hr_files.push_back(e.path());
    std::sort(hr_files.begin(), hr_files.end());
    if (hr_files.empty()) throw pan::DataError("no .png files in '" + hr_dir + "'");

    double psnr_sum = 0.0, ssim_sum = 0.0;
    int finite_psnr = 0;
    pan::Tape tape;
    tape.set_recording(false);
    for (const auto& hr_path : hr_files) {
        const fs::path lr_path = fs::path(lr_dir) / hr_path.filename();
        if (!fs::exists(lr_path))
            throw pan::DataError("missing LR counterpart '" + lr_path.string() + "'");
        const pan::ImageBuffer hr = pan::load_png(hr_path);
        const pan::ImageBuffer lr = pan::load_png(lr_path);
        const auto sr = model.forward(tape, pan::image_to_tensor(lr));
        const pan::ImageBuffer sr_img = pan::tensor_to_image(*sr);
        const double p = pan::psnr(pan::rgb_to_y(sr_img), pan::rgb_to_y(hr), shave);
        const double s = pan::ssim(pan::rgb_to_y(sr_img), pan::rgb_to_y(hr), shave);
        std::printf("%s: psnr=%s ssim=%.6f\n", hr_path.filename().string().c_str(),
                    std::isinf(p) ? "inf" : std::to_string(p).c_str(), s);
        if (std::isfinite(p)) {
            psnr_sum += p;
            ++finite_psnr;
        }
        ssim_sum += s;
    }
    std::printf("mean: psnr=%.6f ssim=%.6f over %zu images\n",
                finite_psnr ? psnr_sum / finite_psnr : std::numeric_limits<double>::infinity(),
                ssim_sum / double(hr_files.size()), hr_files.size());
    return 0;
}

int run_gradcheck(int width, int blocks, std::uint64_t seed, const std::string& block_type) {
    pan::ModelConfig cfg;
    cfg.scale = 2;
    cfg.block_type = pan::block_type_from_string(block_type);
    cfg.num_blocks = blocks;
    cfg.nf = width;
    cfg.unf = std::max(2, width - 2);
    cfg.ca_reduction = width >= 4 ? 4 : 2;
    cfg.validate();

    const auto f32 = pan::gradcheck_model<float>(cfg, seed, 200, 1e-2);
    const auto f64 = pan::gradcheck_model<double>(cfg, seed, 200, 1e-5);
    std::printf("checked %d parameters per mode\n", f64.checked);
    std::printf("max_rel_error_f32: %.3e (worst %s)\n", f32.max_rel_error,
                f32.worst_param.c_str());
    std::printf("max_rel_error_f64: %.3e (worst %s)\n", f64.max_rel_error,
                f64.worst_param.c_str());
    const bool ok = f32.max_rel_error < 1e-2 && f64.max_rel_error < 1e-5;
    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pixel-attention super-resolution toolkit"};
    app.require_subcommand(1);

    ModelFlags mf;
    std::string hr_res = "1280x720";
    std::string ledger_out;
    bool summary = false;
    auto* analyze = app.add_subcommand("analyze", "parameter and mult-adds accounting");
    add_model_flags(analyze, mf);
    analyze->add_option("--hr-res", hr_res, "stated HR resolution WxH");
    analyze->add_option("--out", ledger_out, "write the per-layer ledger CSV here");
    analyze->add_flag("--summary", summary, "print the per-layer summary");

    std::string hr_dir, out_dir;
    int scale = 4;
    auto* degrade_cmd = app.add_subcommand("degrade", "bicubic-downsample an HR image folder");
    degrade_cmd->add_option("--hr-dir", hr_dir, "folder of HR .png images")->required();
    degrade_cmd->add_option("--scale", scale, "downsampling factor");
    degrade_cmd->add_option("--out-dir", out_dir, "output dataset folder")->required();

    std::string config_path, data_manifest, train_out = "train_out", resume;
    std::uint64_t build_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "run the optimization loop");
    train_cmd->add_option("--config", config_path, "key=value config file")->required();
    train_cmd->add_option("--data", data_manifest, "manifest.tsv from degrade")->required();
    train_cmd->add_option("--out", train_out, "output directory");
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    train_cmd->add_option("--build-seed", build_seed, "override the weight init seed");

    std::string ckpt, in_path, out_path = "sr.png";
    int infer_scale = 0;
    auto* infer_cmd = app.add_subcommand("infer", "super-resolve one image");
    infer_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer_cmd->add_option("--in", in_path, "input LR .png")->required();
    infer_cmd->add_option("--out", out_path, "output SR .png");
    infer_cmd->add_option("--scale", infer_scale, "expected scale (validated)");

    std::string eval_ckpt, eval_hr, eval_lr;
    int shave = -1;
    auto* eval_cmd = app.add_subcommand("eval", "Y-channel PSNR/SSIM over a folder pair");
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--hr-dir", eval_hr, "ground-truth folder")->required();
    eval_cmd->add_option("--lr-dir", eval_lr, "input folder")->required();
    eval_cmd->add_option("--shave", shave, "border pixels to crop (default: the scale)");

    int gc_width = 8, gc_blocks = 2;
    std::uint64_t gc_seed = 515;
    std::string gc_block_type = "scpa";
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference sweep on a tiny model");
    gc_cmd->add_option("--width", gc_width, "trunk width");
    gc_cmd->add_option("--blocks", gc_blocks, "block count (0 checks only the outer path)");
    gc_cmd->add_option("--seed", gc_seed, "rng seed");
    gc_cmd->add_option("--block-type", gc_block_type, "scpa|rb|rb_ca|rb_sa|rb_pa");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) return run_analyze(mf, hr_res, ledger_out, summary);
        if (*degrade_cmd) return run_degrade(hr_dir, scale, out_dir);
        if (*train_cmd) return run_train(config_path, data_manifest, train_out, resume, build_seed);
        if (*infer_cmd) return run_infer(ckpt, in_path, out_path, infer_scale);
        if (*eval_cmd) return run_eval(eval_ckpt, eval_hr, eval_lr, shave);
        if (*gc_cmd) return run_gradcheck(gc_width, gc_blocks, gc_seed, gc_block_type);
    } catch (const pan::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const pan::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
