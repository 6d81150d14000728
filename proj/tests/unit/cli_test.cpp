#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nert/io.hpp"
#include "oracles.hpp"

using namespace nert;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(NERT_CLI_PATH) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "nert_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string clean_png() { return (oracle::data_dir() / "astronaut_64.png").string(); }

const std::string kSim = " --image-size 32 32 --kernel-size 5 --d-over-r0 1.5 --frames 4";
const std::string kSmall =
    " --image-size 32 32 --kernel-size 5 --d-over-r0 1.5 --epochs-init 15 --epochs-main 15 --generator-width 16"
    " --deformer-width 4 --lr 1e-3";

fs::path simulated() {
    static const fs::path dir = [] {
        const fs::path d = workdir() / "sim";
        REQUIRE(run_cli("simulate --clean " + clean_png() + " --out " + d.string() + kSim + " --seed 4").code == 0);
        return d;
    }();
    return dir;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
    CHECK(run_cli("simulate --out " + (workdir() / "x").string()).code == 2);
    CHECK(run_cli("restore --frames . --out . --no-such-flag").code == 2);
    CHECK(run_cli("restore --frames . --out . --preset vacuum").code == 2);
    const fs::path cfg = workdir() / "bad.json";
    io::write_file_atomic(cfg, R"({"learning_rte": 0.1})");
    CHECK(run_cli("restore --frames " + simulated().string() + " --out " + (workdir() / "r0").string() + " --config " +
               cfg.string())
              .code == 2);
    CHECK(run_cli("--help").code == 0);
}

TEST_CASE("data errors exit with 3") {
    const fs::path one = workdir() / "one";
    fs::create_directories(one);
    fs::copy_file(simulated() / "frame_000.png", one / "frame_000.png", fs::copy_options::overwrite_existing);
    CHECK(run_cli("restore --frames " + one.string() + " --out " + (workdir() / "r1").string() + kSmall).code == 3);
    CHECK(run_cli("restore --frames " + (workdir() / "missing").string() + " --out " + (workdir() / "r2").string()).code ==
          3);
    CHECK(run_cli("eval --restored " + (simulated() / "frame_000.png").string() + " --truth " + clean_png()).code == 3);
    CHECK(run_cli("plot --run " + (workdir() / "missing").string()).code == 3);
}

TEST_CASE("simulate is byte-identical per seed") {
    const fs::path again = workdir() / "sim_again";
    REQUIRE(run_cli("simulate --clean " + clean_png() + " --out " + again.string() + kSim + " --seed 4").code == 0);
    for (const char* f : {"frame_000.png", "frame_003.png", "ground_truth.png", "sidecar.json", "distortions.bin"}) {
        CHECK(io::sha256_file(simulated() / f) == io::sha256_file(again / f));
    }
    CHECK(io::list_frames(simulated()).size() == 4);
    const auto side = nlohmann::json::parse(io::read_file(simulated() / "sidecar.json"));
    CHECK(side.at("d_over_r0").get<double>() == 1.5);

    const fs::path other = workdir() / "sim_other";
    REQUIRE(run_cli("simulate --clean " + clean_png() + " --out " + other.string() + kSim + " --seed 5").code == 0);
    CHECK(io::sha256_file(simulated() / "frame_000.png") != io::sha256_file(other / "frame_000.png"));
}

TEST_CASE("restore, eval and plot") {
    const fs::path run = workdir() / "run";
    REQUIRE(run_cli("restore --frames " + simulated().string() + " --out " + run.string() + kSmall + " --seed 2").code == 0);
    for (const char* f : {"restored.png", "loss_curve.csv", "metrics.json", "run_manifest.json", "checkpoint.nert"}) {
        CHECK(fs::exists(run / f));
    }
    const auto csv = lines(io::read_file(run / "loss_curve.csv"));
    CHECK(csv.front().rfind("epoch,term_a,term_b,term_c,total", 0) == 0);
    CHECK(csv.size() == 31);
    const auto manifest = nlohmann::json::parse(io::read_file(run / "run_manifest.json"));
    CHECK(manifest.at("config").at("psf_kernel_size").get<int>() == 5);
    CHECK(manifest.at("config").at("corr").get<double>() == -5.0);

    const Run e = run_cli("eval --restored " + (run / "restored.png").string() + " --truth " + (run / "restored.png").string());
    REQUIRE(e.code == 0);
    const auto m = nlohmann::json::parse(e.out);
    CHECK(m.at("psnr").get<double>() == 100.0);
    CHECK(m.at("ssim").get<double>() == doctest::Approx(1.0));

    CHECK(run_cli("plot --run " + run.string()).code == 0);
    CHECK(fs::exists(run / "loss_curve.png"));
    CHECK(fs::exists(run / "error_map.png"));

    // Same seed, same restored image.
    const fs::path rerun = workdir() / "rerun";
    REQUIRE(run_cli("restore --frames " + simulated().string() + " --out " + rerun.string() + kSmall + " --seed 2").code == 0);
    CHECK(io::sha256_file(run / "restored.png") == io::sha256_file(rerun / "restored.png"));

    // A float32 basis cache reproduces the uncached run closely.
    const fs::path cache = workdir() / "basis.bin";
    const fs::path cached = workdir() / "cached";
    REQUIRE(run_cli("restore --frames " + simulated().string() + " --out " + cached.string() + kSmall +
                    " --seed 2 --basis-cache " + cache.string())
                .code == 0);
    CHECK(fs::exists(cache));
    const Image a = io::read_image(run / "restored.png"), b = io::read_image(cached / "restored.png");
    CHECK(oracle::psnr(a, b) > 40.0);
}

TEST_CASE("anytime writes per-frame outputs and a timing table") {
    const fs::path out = workdir() / "anytime";
    REQUIRE(run_cli("anytime --frames " + simulated().string() + " --out " + out.string() + kSmall +
                 " --n-frames 2 --warm-epochs 3")
                .code == 0);
    const auto rows = lines(io::read_file(out / "timing.csv"));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "frame,window,warm_epochs,warm_seconds,cold_epochs,cold_seconds,warm_epochs_to_match,ratio,loss,psnr");
    CHECK(rows[1].rfind("1,2,0,", 0) == 0);
    for (int k = 2; k < 4; ++k) CHECK(rows[k].rfind(std::to_string(k) + ",2,3,", 0) == 0);
    for (const char* f : {"restored_001.png", "restored_002.png", "restored_003.png"}) CHECK(fs::exists(out / f));
}

}  // TEST_SUITE
