#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "oaflow/image_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace oaflow;

namespace {

const std::string kCli = OAFLOW_CLI;
const std::string kCheckpoint = OAFLOW_FIXTURE_CHECKPOINT;

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::path(test::temp_path("cli_" + std::to_string(::getpid())));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, std::string* out = nullptr) {
  const std::string cmd = kCli + " " + args + " 2>" + (work_dir() / "stderr.txt").string();
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::string text;
  while (const size_t n = std::fread(buf.data(), 1, buf.size(), p)) text.append(buf.data(), n);
  const int status = ::pclose(p);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const std::string& name, const std::string& text) {
  const std::string path = (work_dir() / name).string();
  std::ofstream(path) << text;
  return path;
}

const char* kSmallConfig =
    "window_u_min = -24\nwindow_u_max = 24\nwindow_v_min = -16\nwindow_v_max = 16\n"
    "disparity_min = -32\ndisparity_max = 32\npatch_range = 64\nransac_iterations = 500\n";

std::string scene_dir(int seed) {
  const std::string d = (work_dir() / ("scene" + std::to_string(seed))).string();
  if (!fs::exists(fs::path(d) / "instances.png"))
    REQUIRE(run("synth --seed " + std::to_string(seed) + " --width 128 --height 64 --out-dir " + d) == 0);
  return d;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("estimate --image1 a.png") == 2);
  CHECK(run("eval --est /nonexistent/est.png --gt /nonexistent/gt.png") == 2);
  CHECK(run("--threads x synth") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("synth writes a complete bundle") {
  const std::string d = scene_dir(1);
  for (const char* f : {"frame1.png", "frame2.png", "flow_occ.png", "flow_noc.png", "instances.png", "occlusion.png"})
    CHECK(fs::is_regular_file(fs::path(d) / f));
  const Image img = load_image(d + "/frame1.png");
  CHECK(img.width == 128);
  CHECK(img.height == 64);
  const FlowField gt = read_flow_png(d + "/flow_occ.png");
  CHECK(gt.count_valid() == 128u * 64u);
  CHECK(read_flow_png(d + "/flow_noc.png").count_valid() < gt.count_valid());
}

TEST_CASE("configuration problems exit with 3") {
  const std::string d = scene_dir(1);
  const std::string base = "estimate --image1 " + d + "/frame1.png --image2 " + d + "/frame2.png --out " +
                           (work_dir() / "x.png").string();
  CHECK(run(base + " --checkpoint " + (work_dir() / "missing.ckpt").string()) == 3);
  CHECK(run(base + " --config " + write_config("bad.cfg", "bogus_key = 1\n")) == 3);
  CHECK(run(base + " --config " + (work_dir() / "absent.cfg").string() + " --checkpoint " + kCheckpoint) == 3);
  // The environment variable names the default config file.
  ::setenv("OAFLOW_CONFIG", write_config("env.cfg", "top_k = -1\n").c_str(), 1);
  CHECK(run(base + " --checkpoint " + kCheckpoint) == 3);
  ::unsetenv("OAFLOW_CONFIG");
}

TEST_CASE("estimate and eval on a synthetic scene") {
  const std::string d = scene_dir(2);
  const std::string out = (work_dir() / "est2.png").string();
  const std::string cfg = write_config("small.cfg", kSmallConfig);
  REQUIRE(run("estimate --image1 " + d + "/frame1.png --image2 " + d + "/frame2.png --instances " + d +
              "/instances.png --config " + cfg + " --checkpoint " + kCheckpoint + " --out " + out) == 0);
  const FlowField est = read_flow_png(out);
  CHECK(est.width() == 128);
  CHECK(est.count_valid() == 128u * 64u);
  std::ifstream report(out + ".report.txt");
  CHECK(report.good());

  std::string table;
  CHECK(run("eval --est " + out + " --gt " + d + "/flow_occ.png --gt-noc " + d + "/flow_noc.png --instances " + d +
                "/instances.png",
            &table) == 0);
  CHECK(table.find("noc") != std::string::npos);
  CHECK(table.find("all") != std::string::npos);

  CHECK(run("viz --flow " + out + " --gt " + d + "/flow_occ.png --out " + (work_dir() / "v.png").string() +
            " --error-out " + (work_dir() / "e.png").string()) == 0);
  CHECK(fs::is_regular_file(work_dir() / "e.png"));
}

TEST_CASE("identical frames give near-zero flow") {
  const std::string d = scene_dir(3);
  const std::string out = (work_dir() / "same.png").string();
  const std::string cfg = write_config("small.cfg", kSmallConfig);
  REQUIRE(run("estimate --image1 " + d + "/frame1.png --image2 " + d + "/frame1.png --config " + cfg +
              " --checkpoint " + kCheckpoint + " --out " + out) == 0);
  const FlowField f = read_flow_png(out);
  double worst = 0;
  for (size_t i = 0; i < f.u.size(); ++i) worst = std::max(worst, double(std::hypot(f.u[i], f.v[i])));
  CHECK(worst < 0.5);
}
