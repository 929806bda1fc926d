// fusionnet: synthesize datasets, train, fuse, export alpha maps, evaluate.
//
// Exit codes: 0 success, 1 usage error, 2 runtime/I-O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fusionnet/image_io.hpp"
#include "fusionnet/synthgen.hpp"
#include "fusionnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace fusionnet;

namespace {

std::pair<int64_t, int64_t> parse_size(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= text.size())
        throw CLI::ValidationError("--size", "expected HxW, e.g. 64x80");
    try {
        return {std::stoll(text.substr(0, x)), std::stoll(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw CLI::ValidationError("--size", "expected integer dimensions, e.g. 64x80");
    }
}

// Lenient single-image loading for fuse/export-alpha: IR collapses to
// luminance if stored as RGB, VIS replicates to three planes if grayscale.
Tensor load_ir(const fs::path& path) {
    Tensor ir = load_image(path);
    return ir.extent(0) == 3 ? rgb_to_luminance(ir) : ir;
}

Tensor load_vis(const fs::path& path) {
    Tensor vis = load_image(path);
    if (vis.extent(0) == 3) return vis;
    Tensor rgb({3, vis.extent(1), vis.extent(2)});
    for (int64_t c = 0; c < 3; ++c)
        std::copy_n(vis.data(), vis.numel(), rgb.data() + c * vis.numel());
    return rgb;
}

struct FuseInputs {
    Tensor ir;
    Tensor vis;
    Tensor vis_y;
};

FuseInputs load_fuse_inputs(const fs::path& ir_path, const fs::path& vis_path) {
    FuseInputs in;
    in.ir = load_ir(ir_path);
    in.vis = load_vis(vis_path);
    if (in.ir.extent(1) != in.vis.extent(1) || in.ir.extent(2) != in.vis.extent(2))
        throw shape_error("ir and vis sizes differ after preprocessing: ir is " +
                          shape_to_string(in.ir.shape()) + ", vis is " +
                          shape_to_string(in.vis.shape()));
    in.vis_y = rgb_to_luminance(in.vis);
    return in;
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

int cmd_synth(const std::string& out_root, int64_t count, uint64_t seed,
              const std::optional<std::string>& size) {
    SynthSpec spec;
    spec.seed = seed;
    if (size) {
        const auto [h, w] = parse_size(*size);
        spec.height = h;
        spec.width = w;
        // keep the default blob radii proportionate on small canvases
        spec.radius_max = std::min(spec.radius_max, std::max<int64_t>(1, std::min(h, w) / 4));
        spec.radius_min = std::min(spec.radius_min, spec.radius_max);
    }
    DatasetManifest manifest = write_dataset(spec, out_root, count);
    std::cerr << "wrote " << manifest.ids.size() << " pairs under " << out_root << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_root,
              const std::string& out_dir) {
    TrainConfig config = load_config(config_path);
    config.out_dir = out_dir;
    config.validate();
    DatasetManifest manifest = build_manifest(data_root);
    if (manifest.empty()) throw config_error("no usable pairs under " + data_root);

    TrainResult result = train(config, manifest);
    const LossBreakdown& last = result.log.empty() ? LossBreakdown{} : result.log.back().loss;
    std::printf("final step %lld: mse=%.9g grad=%.9g entropy=%.9g roi=%.9g total=%.9g\n",
                static_cast<long long>(result.checkpoint.step), last.mse, last.grad, last.entropy,
                last.roi, last.total);
    return 0;
}

int cmd_fuse(const std::string& ckpt_path, const std::string& ir_path, const std::string& vis_path,
             const std::string& out_path, const std::optional<std::string>& alpha_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    FuseInputs in = load_fuse_inputs(ir_path, vis_path);
    ForwardArtifacts artifacts = forward(in.ir, in.vis, in.vis_y, ckpt.params);
    save_image(artifacts.fused, out_path);
    if (alpha_path) save_image(artifacts.alpha, *alpha_path); // brighter = more IR
    return 0;
}

int cmd_export_alpha(const std::string& ckpt_path, const std::string& ir_path,
                     const std::string& vis_path, const std::string& out_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    FuseInputs in = load_fuse_inputs(ir_path, vis_path);
    ForwardArtifacts artifacts = forward(in.ir, in.vis, in.vis_y, ckpt.params);
    save_image(artifacts.alpha, out_path);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_root,
             const std::string& out_csv) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DatasetManifest manifest = build_manifest(data_root);
    if (manifest.empty()) throw config_error("no usable pairs under " + data_root);

    MetricReport report = evaluate(ckpt, manifest);

    std::ofstream csv(out_csv);
    if (!csv) throw io_error("cannot write metric report: " + out_csv);
    csv << "id,ssim,mse,entropy,roi_ssim\n";
    for (const auto& row : report.rows) {
        csv << row.id << "," << format_metric(row.ssim) << "," << format_metric(row.mse) << ","
            << format_metric(row.entropy) << ","
            << (row.roi_ssim ? format_metric(*row.roi_ssim) : "") << "\n";
    }
    const std::string mean_roi = report.mean_roi_ssim ? format_metric(*report.mean_roi_ssim) : "";
    csv << "mean," << format_metric(report.mean_ssim) << "," << format_metric(report.mean_mse)
        << "," << format_metric(report.mean_entropy) << "," << mean_roi << "\n";
    csv.close();

    std::printf("mean: ssim=%s mse=%s entropy=%s roi_ssim=%s\n",
                format_metric(report.mean_ssim).c_str(), format_metric(report.mean_mse).c_str(),
                format_metric(report.mean_entropy).c_str(),
                mean_roi.empty() ? "n/a" : mean_roi.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FusionNet infrared/visible image fusion toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic IR/VIS dataset with ROI boxes");
    std::string synth_out;
    int64_t synth_count = 8;
    uint64_t synth_seed = 0;
    std::optional<std::string> synth_size;
    synth->add_option("--out", synth_out, "Dataset root directory")->required();
    synth->add_option("--count", synth_count, "Number of pairs");
    synth->add_option("--seed", synth_seed, "Base seed");
    synth->add_option("--size", synth_size, "Image size as HxW (default 64x64)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on a dataset directory");
    std::string train_config, train_data, train_out;
    train_cmd->add_option("--config", train_config, "Key-value config file")->required();
    train_cmd->add_option("--data", train_data, "Dataset root (ir/, vis/, optional ann/)")->required();
    train_cmd->add_option("--out", train_out, "Output directory for checkpoints and the loss log")
        ->required();

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Fuse one IR/VIS pair with a trained checkpoint");
    std::string fuse_ckpt, fuse_ir, fuse_vis, fuse_out;
    std::optional<std::string> fuse_alpha;
    fuse->add_option("--ckpt", fuse_ckpt, "Checkpoint file")->required();
    fuse->add_option("--ir", fuse_ir, "Infrared PNG")->required();
    fuse->add_option("--vis", fuse_vis, "Visible PNG")->required();
    fuse->add_option("--out", fuse_out, "Fused grayscale PNG path")->required();
    fuse->add_option("--alpha", fuse_alpha, "Also write the alpha map PNG (brighter = more IR)");

    // export-alpha
    auto* export_alpha = app.add_subcommand("export-alpha", "Write only the alpha map for a pair");
    std::string ea_ckpt, ea_ir, ea_vis, ea_out;
    export_alpha->add_option("--ckpt", ea_ckpt, "Checkpoint file")->required();
    export_alpha->add_option("--ir", ea_ir, "Infrared PNG")->required();
    export_alpha->add_option("--vis", ea_vis, "Visible PNG")->required();
    export_alpha->add_option("--out", ea_out, "Alpha map PNG path")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint over a dataset");
    std::string eval_ckpt, eval_data, eval_out;
    eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset root")->required();
    eval_cmd->add_option("--out", eval_out, "Metric CSV path (per-image rows plus a mean row)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_out, synth_count, synth_seed, synth_size);
        if (train_cmd->parsed()) return cmd_train(train_config, train_data, train_out);
        if (fuse->parsed()) return cmd_fuse(fuse_ckpt, fuse_ir, fuse_vis, fuse_out, fuse_alpha);
        if (export_alpha->parsed()) return cmd_export_alpha(ea_ckpt, ea_ir, ea_vis, ea_out);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
