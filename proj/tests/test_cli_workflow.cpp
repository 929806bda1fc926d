// Spawns the installed CLI binary (path in FUSIONNET_CLI) and checks the
// user-facing contracts: output formats, byte-exact degenerate fusion, exit
// codes, and read-path idempotence.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "fusionnet/image_io.hpp"
#include "fusionnet/synthgen.hpp"
#include "fusionnet/trainer.hpp"

using namespace fusionnet;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("FUSIONNET_CLI");
    REQUIRE_MESSAGE(env != nullptr, "FUSIONNET_CLI must point at the fusionnet binary");
    return env;
}

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " 2>&1";
    std::array<char, 512> buf{};
    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("fusionnet_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

fs::path write_zeros_checkpoint(const fs::path& dir) {
    TrainConfig config;
    config.channels = 8;
    config.height = 16;
    config.width = 16;
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.params = init_params<float>(0, InitScheme::zeros, config.channels);
    for (const auto& [name, tensor] : ckpt.params.named_tensors())
        ckpt.opt_states.push_back(AdamState::for_param(*tensor));
    const fs::path path = dir / "zeros.fnck";
    save_checkpoint(ckpt, path);
    return path;
}

} // namespace

TEST_CASE("synth: counts, sizes, reproducible trees") {
    const fs::path root = temp_dir("synth");
    auto first = run_cli("synth --out " + (root / "a").string() + " --count 5 --seed 3");
    CHECK(first.exit_code == 0);
    DatasetManifest manifest = build_manifest(root / "a");
    CHECK(manifest.ids.size() == 5);

    auto sized = run_cli("synth --out " + (root / "b").string() + " --count 1 --seed 3 --size 64x80");
    CHECK(sized.exit_code == 0);
    Tensor ir = load_image(root / "b" / "ir" / "synth_0000.png");
    CHECK(ir.extent(1) == 64);
    CHECK(ir.extent(2) == 80);

    auto again = run_cli("synth --out " + (root / "c").string() + " --count 5 --seed 3");
    CHECK(again.exit_code == 0);
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path twin = root / "c" / fs::relative(entry.path(), root / "a");
        CHECK(read_file(entry.path()) == read_file(twin));
    }
}

TEST_CASE("fuse with a zeros checkpoint averages the quantized inputs exactly") {
    const fs::path dir = temp_dir("fuse_zeros");
    run_cli("synth --out " + (dir / "data").string() + " --count 1 --seed 11 --size 16x16");
    const fs::path ckpt = write_zeros_checkpoint(dir);
    const fs::path ir_path = dir / "data" / "ir" / "synth_0000.png";
    const fs::path vis_path = dir / "data" / "vis" / "synth_0000.png";

    auto result = run_cli("fuse --ckpt " + ckpt.string() + " --ir " + ir_path.string() + " --vis " +
                          vis_path.string() + " --out " + (dir / "fused.png").string());
    CHECK(result.exit_code == 0);
    CHECK_FALSE(fs::exists(dir / "alpha.png")); // --alpha omitted: no alpha file

    // zeros-init network has alpha = 0.5 everywhere, so every output byte is
    // round(255 * (IR + VIS_Y)/2) recomputed here from the input bytes
    Tensor ir = load_image(ir_path);
    Tensor vis = load_image(vis_path);
    Tensor fused = load_image(dir / "fused.png");
    REQUIRE(fused.shape() == ir.shape());
    for (int64_t i = 0; i < ir.numel(); ++i) {
        const double vis_y = 0.299 * vis[i] + 0.587 * vis[i + ir.numel()] +
                             0.114 * vis[i + 2 * ir.numel()];
        const float blended =
            static_cast<float>(0.5 * static_cast<double>(ir[i]) +
                               0.5 * static_cast<double>(static_cast<float>(vis_y)));
        const long expected = std::lround(std::clamp(static_cast<double>(blended), 0.0, 1.0) * 255.0);
        CHECK(std::lround(fused[i] * 255.0f) == expected);
    }
}

TEST_CASE("fuse writes the alpha map only when asked, with IR-bright polarity") {
    const fs::path dir = temp_dir("fuse_alpha");
    run_cli("synth --out " + (dir / "data").string() + " --count 1 --seed 4 --size 16x16");
    const fs::path ckpt = write_zeros_checkpoint(dir);
    const std::string common = " --ckpt " + ckpt.string() + " --ir " +
                               (dir / "data" / "ir" / "synth_0000.png").string() + " --vis " +
                               (dir / "data" / "vis" / "synth_0000.png").string();

    auto with_alpha = run_cli("fuse" + common + " --out " + (dir / "f.png").string() + " --alpha " +
                              (dir / "a.png").string());
    CHECK(with_alpha.exit_code == 0);
    REQUIRE(fs::exists(dir / "a.png"));
    Tensor alpha = load_image(dir / "a.png");
    // zeros checkpoint: alpha = 0.5 -> mid-gray 128 everywhere
    for (int64_t i = 0; i < alpha.numel(); ++i)
        CHECK(std::lround(alpha[i] * 255.0f) == 128);

    auto exported = run_cli("export-alpha" + common + " --out " + (dir / "a2.png").string());
    CHECK(exported.exit_code == 0);
    CHECK(read_file(dir / "a.png") == read_file(dir / "a2.png"));
}

TEST_CASE("fused bytes stay within the quantized input envelope") {
    const fs::path dir = temp_dir("fuse_envelope");
    run_cli("synth --out " + (dir / "data").string() + " --count 3 --seed 29 --size 24x24");

    // train briefly so alpha is non-trivial
    TrainConfig config;
    config.seed = 2;
    config.channels = 8;
    config.epochs = 2;
    config.height = 24;
    config.width = 24;
    config.lr = 1e-3;
    config.out_dir = (dir / "run").string();
    DatasetManifest manifest = build_manifest(dir / "data");
    train(config, manifest);

    for (const auto& id : manifest.ids) {
        const fs::path ir_path = dir / "data" / "ir" / (id + ".png");
        const fs::path vis_path = dir / "data" / "vis" / (id + ".png");
        const fs::path out = dir / (id + "_fused.png");
        auto result = run_cli("fuse --ckpt " + (dir / "run" / "ckpt_final.fnck").string() +
                              " --ir " + ir_path.string() + " --vis " + vis_path.string() +
                              " --out " + out.string());
        REQUIRE(result.exit_code == 0);

        Tensor ir = load_image(ir_path);
        Tensor vis_y = rgb_to_luminance(load_image(vis_path));
        Tensor fused = load_image(out);
        for (int64_t i = 0; i < fused.numel(); ++i) {
            const long fused_b = std::lround(fused[i] * 255.0f);
            const long ir_b = std::lround(ir[i] * 255.0f);
            const long vis_b = std::lround(vis_y[i] * 255.0f);
            CHECK(fused_b >= std::min(ir_b, vis_b) - 1);
            CHECK(fused_b <= std::max(ir_b, vis_b) + 1);
        }
    }
}

TEST_CASE("fuse rejects unregistered pairs with both shapes in the message") {
    const fs::path dir = temp_dir("fuse_mismatch");
    run_cli("synth --out " + (dir / "a").string() + " --count 1 --seed 5 --size 16x16");
    run_cli("synth --out " + (dir / "b").string() + " --count 1 --seed 5 --size 24x24");
    const fs::path ckpt = write_zeros_checkpoint(dir);

    auto result = run_cli("fuse --ckpt " + ckpt.string() + " --ir " +
                          (dir / "a" / "ir" / "synth_0000.png").string() + " --vis " +
                          (dir / "b" / "vis" / "synth_0000.png").string() + " --out " +
                          (dir / "f.png").string());
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("16") != std::string::npos);
    CHECK(result.output.find("24") != std::string::npos);
}

TEST_CASE("train: exit codes and outputs") {
    const fs::path dir = temp_dir("train");
    run_cli("synth --out " + (dir / "data").string() + " --count 2 --seed 8 --size 16x16");
    {
        std::ofstream config(dir / "train.cfg");
        config << "lr = 0.001\nepochs = 2\nchannels = 8\nheight = 16\nwidth = 16\nseed = 7\n";
    }

    auto ok = run_cli("train --config " + (dir / "train.cfg").string() + " --data " +
                      (dir / "data").string() + " --out " + (dir / "run").string());
    CHECK(ok.exit_code == 0);
    CHECK(fs::exists(dir / "run" / "ckpt_final.fnck"));
    CHECK(fs::exists(dir / "run" / "loss_log.csv"));
    CHECK(ok.output.find("total=") != std::string::npos);

    // the loss log carries the documented header
    std::ifstream log(dir / "run" / "loss_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,epoch,id,mse,grad,entropy,roi,total");

    auto missing_data = run_cli("train --config " + (dir / "train.cfg").string() + " --data " +
                                (dir / "nowhere").string() + " --out " + (dir / "run2").string());
    CHECK(missing_data.exit_code == 2);
    CHECK(missing_data.output.find("nowhere") != std::string::npos);

    auto missing_config = run_cli("train --data " + (dir / "data").string() + " --out " +
                                  (dir / "run3").string());
    CHECK(missing_config.exit_code == 1); // usage error: --config is required

    auto unknown_flag = run_cli("train --config " + (dir / "train.cfg").string() + " --data " +
                                (dir / "data").string() + " --out " + (dir / "run4").string() +
                                " --warp-speed 9");
    CHECK(unknown_flag.exit_code == 1);
}

TEST_CASE("eval: CSV rows, mean row, agreement with the library") {
    const fs::path dir = temp_dir("eval");
    run_cli("synth --out " + (dir / "data").string() + " --count 3 --seed 13 --size 24x24");
    const fs::path ckpt = write_zeros_checkpoint(dir);

    auto result = run_cli("eval --ckpt " + ckpt.string() + " --data " + (dir / "data").string() +
                          " --out " + (dir / "metrics.csv").string());
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("mean:") != std::string::npos);

    std::ifstream csv(dir / "metrics.csv");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    REQUIRE(rows.size() == 5); // header + 3 pairs + mean
    CHECK(rows[0] == std::vector<std::string>{"id", "ssim", "mse", "entropy", "roi_ssim"});
    CHECK(rows[4][0] == "mean");

    // mean row equals the column means of the per-image rows
    for (size_t col = 1; col <= 3; ++col) {
        double acc = 0;
        for (size_t r = 1; r <= 3; ++r) acc += std::stod(rows[r][col]);
        CHECK(std::stod(rows[4][col]) == doctest::Approx(acc / 3.0).epsilon(1e-7));
    }

    // values match the library evaluate() on the same inputs
    Checkpoint loaded = load_checkpoint(ckpt);
    MetricReport report = evaluate(loaded, build_manifest(dir / "data"));
    for (size_t r = 0; r < 3; ++r) {
        CHECK(rows[r + 1][0] == report.rows[r].id);
        CHECK(std::stod(rows[r + 1][1]) == doctest::Approx(report.rows[r].ssim).epsilon(1e-8));
        CHECK(std::stod(rows[r + 1][2]) == doctest::Approx(report.rows[r].mse).epsilon(1e-8));
        CHECK(std::stod(rows[r + 1][3]) == doctest::Approx(report.rows[r].entropy).epsilon(1e-8));
    }
}

TEST_CASE("subcommands never mutate their inputs") {
    const fs::path dir = temp_dir("idempotent");
    run_cli("synth --out " + (dir / "data").string() + " --count 1 --seed 19 --size 16x16");
    const fs::path ckpt = write_zeros_checkpoint(dir);
    const fs::path ir = dir / "data" / "ir" / "synth_0000.png";
    const fs::path vis = dir / "data" / "vis" / "synth_0000.png";
    const std::string ir_before = read_file(ir);
    const std::string vis_before = read_file(vis);
    const std::string ckpt_before = read_file(ckpt);

    run_cli("fuse --ckpt " + ckpt.string() + " --ir " + ir.string() + " --vis " + vis.string() +
            " --out " + (dir / "f.png").string());
    run_cli("eval --ckpt " + ckpt.string() + " --data " + (dir / "data").string() + " --out " +
            (dir / "m.csv").string());

    CHECK(read_file(ir) == ir_before);
    CHECK(read_file(vis) == vis_before);
    CHECK(read_file(ckpt) == ckpt_before);
}
