#include <cmath>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "oaflow/config.hpp"
#include "oaflow/evaluate.hpp"
#include "oaflow/pipeline.hpp"
#include "oaflow/synthetic.hpp"
#include "support.hpp"

using namespace oaflow;

namespace {

FlowField filled(int w, int h, float u, float v) {
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(x, y, u, v);
  return f;
}

InstanceMap striped_instances(int w, int h) {
  Raster<int> raw(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) raw(x, y) = x < 2 ? 0 : (x < 4 ? 7 : 9);
  return make_instance_map(raw);
}

}  // namespace

TEST_CASE("compose routes pixels by instance label") {
  const InstanceMap map = striped_instances(6, 3);
  REQUIRE(map.num_instances == 2);
  std::vector<InstanceFlowResult> inst(2);
  inst[0].dense = filled(6, 3, 1, 0);
  inst[1].dense = filled(6, 3, 2, 0);
  const FlowField out = compose(filled(6, 3, -1, 0), inst, map);
  for (int y = 0; y < 3; ++y) {
    CHECK(out.u(0, y) == -1.0f);
    CHECK(out.u(3, y) == 1.0f);
    CHECK(out.u(5, y) == 2.0f);
  }
  inst.pop_back();
  CHECK_THROWS_AS(compose(filled(6, 3, 0, 0), inst, map), std::invalid_argument);
}

TEST_CASE("outlier threshold") {
  CHECK_FALSE(is_flow_outlier(2.9, 10));
  CHECK(is_flow_outlier(3.1, 10));
  CHECK_FALSE(is_flow_outlier(4.9, 100));  // 5% of 100 px is the binding limit
  CHECK(is_flow_outlier(5.1, 100));
  CHECK_FALSE(is_flow_outlier(4.0, 100));
  CHECK(is_flow_outlier(6.0, 100));
  CHECK_FALSE(is_flow_outlier(3.0, 0));
}

TEST_CASE("Fl counts") {
  const int W = 6, H = 3;
  const InstanceMap map = striped_instances(W, H);
  const FlowField gt = filled(W, H, 10, 0);
  FlowField est = filled(W, H, 10, 0);
  est.set(0, 0, 14, 0);   // bg outlier
  est.set(2, 0, 12, 0);   // fg inlier
  est.invalidate(3, 1);   // fg, counts as an outlier
  FlowField gt_holes = gt;
  gt_holes.invalidate(5, 2);  // skipped
  Mask noc(W, H, 1);
  noc(0, 0) = 0;
  const EvalReport r = evaluate_fl(est, gt_holes, noc, map);
  CHECK(r.all.all.pixels == 17);
  CHECK(r.all.all.outliers == 2);
  CHECK(r.all.bg.pixels == 6);
  CHECK(r.all.bg.outliers == 1);
  CHECK(r.all.fg.pixels == 11);
  CHECK(r.all.fg.outliers == 1);
  CHECK(r.noc.all.pixels == 16);
  CHECK(r.noc.bg.outliers == 0);
  CHECK(r.noc.fg.percent() == doctest::Approx(100.0 / 11));

  EvalReport sum = r;
  sum += r;
  CHECK(sum.all.all.pixels == 34);
  CHECK(sum.all.all.percent() == doctest::Approx(r.all.all.percent()));
  const std::string table = format_eval_report(r);
  CHECK(table.find("noc") != std::string::npos);
  CHECK(table.find("11.76") != std::string::npos);
}

TEST_CASE("synthetic ground truth obeys each body's epipolar geometry") {
  const SyntheticScene s = make_synthetic_scene(3, {128, 64, 100.0});
  REQUIRE(s.motions.size() == s.objects.size() + 1);
  const int W = s.img1.width, H = s.img1.height;
  std::vector<Eigen::Matrix3d> F;
  for (const auto& m : s.motions) F.push_back(fundamental_from_motion(s.camera, m).m);
  size_t checked = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      REQUIRE(s.gt.is_valid(x, y));
      const Eigen::Vector2d p(x, y), p2(x + s.gt.u(x, y), y + s.gt.v(x, y));
      if (s.instances.labels(x, y) == 0) {
        CHECK(test::line_distance(F[0], p, p2) < 1e-3);
        ++checked;
      } else {
        double best = 1e9;
        for (size_t k = 1; k < F.size(); ++k) best = std::min(best, test::line_distance(F[k], p, p2));
        CHECK(best < 1e-3);
      }
      if (!s.noc(x, y)) CHECK(s.occluded(x, y));
    }
  CHECK(checked > static_cast<size_t>(W * H / 2));
}

TEST_CASE("synthetic frames are brightness consistent along the ground truth") {
  const SyntheticScene s = make_synthetic_scene(4, {128, 64, 100.0});
  std::vector<double> diff;
  for (int y = 0; y < s.img1.height; ++y)
    for (int x = 0; x < s.img1.width; ++x)
      if (s.noc(x, y)) diff.push_back(std::abs(sample_bilinear(s.img2, x + s.gt.u(x, y), y + s.gt.v(x, y)) - s.img1(x, y)));
  REQUIRE(diff.size() > 1000);
  std::nth_element(diff.begin(), diff.begin() + diff.size() / 2, diff.end());
  CHECK(diff[diff.size() / 2] < 0.03);
}

TEST_CASE("synthetic scenes are deterministic and the static case is still") {
  const SyntheticSpec spec{96, 48, 80.0};
  const SyntheticScene a = make_synthetic_scene(9, spec), b = make_synthetic_scene(9, spec);
  CHECK(a.img1.data == b.img1.data);
  CHECK(a.img2.data == b.img2.data);
  CHECK(a.gt.u.data == b.gt.u.data);
  CHECK(a.instances.num_instances == static_cast<int>(a.objects.size()));

  SyntheticSpec still = spec;
  still.static_scene = true;
  const SyntheticScene c = make_synthetic_scene(9, still);
  CHECK(c.img1.data == c.img2.data);
  for (size_t i = 0; i < c.gt.u.size(); ++i) CHECK(std::hypot(c.gt.u[i], c.gt.v[i]) < 1e-4);
  CHECK_THROWS_AS(fundamental_from_motion(c.camera, RigidMotion{}), GeometryError);
}

TEST_CASE("training examples from a scene") {
  const SyntheticScene s = make_synthetic_scene(5, {128, 64, 100.0});
  const auto ex = scene_training_examples(s, 20, 32, 5, 1);
  CHECK(ex.size() == 40);
}

TEST_CASE("config parsing") {
  const PipelineConfig d = parse_config("");
  CHECK(d.top_k == 30);
  CHECK(d.penalties.small == 32.0);
  CHECK(d.penalties.large == 256.0);

  const PipelineConfig c = parse_config(
      "# small search\n"
      "top_k = 12\n"
      "  window_u_min=-40   \n"
      "sgm_lambda1 = 4  # inline\n"
      "sgm_lambda2 = 40\n"
      "confidence_selector = entropy\n"
      "checkpoint = /tmp/some net.ckpt\n");
  CHECK(c.top_k == 12);
  CHECK(c.window.u_min == -40);
  CHECK(c.penalties.small == 4.0);
  CHECK(c.confidence_selector == ConfidenceSelector::entropy);
  CHECK(c.checkpoint == "/tmp/some net.ckpt");

  CHECK(format_config(parse_config(format_config(c))) == format_config(c));
  CHECK_THROWS_AS(parse_config("no_such_key = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("top_k = twelve"), ConfigError);
  CHECK_THROWS_AS(parse_config("top_k = 12abc"), ConfigError);
  CHECK_THROWS_AS(parse_config("top_k"), ConfigError);
  CHECK_THROWS_AS(parse_config("top_k = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config("sgm_lambda1 = 50\nsgm_lambda2 = 10"), ConfigError);
  CHECK_THROWS_AS(parse_config("confidence_selector = best"), ConfigError);
  CHECK_THROWS_AS(load_config(test::temp_path("missing.cfg")), ConfigError);

  const std::string path = test::temp_path("cfg.cfg");
  std::ofstream(path) << "vz_labels = 48\n";
  CHECK(load_config(path).vz_labels == 48);
  std::remove(path.c_str());
}

TEST_CASE("superpixel count scales with the frame area") {
  const PipelineConfig c;
  CHECK(c.superpixels_for(1242, 375) == 800);
  CHECK(c.superpixels_for(621, 375) == 400);
  CHECK(c.superpixels_for(10, 10) == 4);
}

TEST_CASE("pipeline smoke run") {
  const SyntheticScene s = make_synthetic_scene(2, {96, 48, 80.0});
  PipelineConfig cfg = parse_config(
      "window_u_min = -24\nwindow_u_max = 24\nwindow_v_min = -16\nwindow_v_max = 16\n"
      "disparity_min = -32\ndisparity_max = 32\nransac_iterations = 200\n");
  const NetParams net = NetParams::init(NetSpec::tiny(4), 3);
  const PipelineResult r = run(s.img1, s.img2, s.instances, net, cfg);
  CHECK(r.flow.count_valid() == static_cast<size_t>(96 * 48));
  CHECK(r.report.instances.size() == static_cast<size_t>(s.instances.num_instances));
  CHECK(r.report.width == 96);
  CHECK_FALSE(format_run_report(r.report).empty());
  for (size_t i = 0; i < r.flow.u.size(); ++i) CHECK(std::isfinite(r.flow.u[i]));
  CHECK_THROWS(run(s.img1, Image(10, 10), s.instances, net, cfg));
}
