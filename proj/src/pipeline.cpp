#include "oaflow/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

#include "oaflow/bgflow.hpp"
#include "oaflow/costvol.hpp"
#include "oaflow/interpolate.hpp"
#include "oaflow/slanted_plane.hpp"
#include "oaflow/superpixel.hpp"

namespace oaflow {

namespace {

const char* mode_name(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::vz_ratio: return "vz_ratio";
    case BackgroundMode::epipolar_disparity: return "epipolar_disparity";
    case BackgroundMode::rotation_only: return "rotation_only";
  }
  return "?";
}

class StageTimer {
 public:
  explicit StageTimer(RunReport& r) : report_(r), start_(std::chrono::steady_clock::now()) {}
  void lap(const char* name) {
    const auto now = std::chrono::steady_clock::now();
    report_.timings.emplace_back(name, std::chrono::duration<double>(now - start_).count());
    start_ = now;
  }

 private:
  RunReport& report_;
  std::chrono::steady_clock::time_point start_;
};

FlowField background_flow(const Image& img1, const InstanceMap& instances, const SparseMatches& matches,
                          const TopKCostVolume& cv_fw, const TopKCostVolume& cv_bw, const PipelineConfig& cfg,
                          RunReport& report) {
  const int W = img1.width, H = img1.height;
  const Mask bg_mask = instances.background();
  FlowField flow(W, H);
  const BgOptions opts = cfg.bg_options();
  const SparseMatches bg = background_matches(matches, instances);
  report.background_matches = bg.size();

  const BackgroundMotion motion = estimate_background_motion(matches, instances, opts);
  if (!motion.epipolar) {
    report.background_mode = BackgroundMode::rotation_only;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!bg_mask(x, y)) continue;
        const Eigen::Vector2d u = motion.rotation.flow(Eigen::Vector2d(x, y));
        flow.set(x, y, static_cast<float>(u.x()), static_cast<float>(u.y()));
      }
    return flow;
  }

  const EpipolarFrame& frame = *motion.epipolar;
  report.background_F = frame.F.m;
  report.background_epipole = frame.epipole.h;
  report.background_inliers = motion.inliers.size();
  report.background_median_error = motion.median_error;
  SparseMatches inliers;
  for (int i : motion.inliers) inliers.push_back(bg[i]);
  const EpipolarFrame bw = backward_frame(frame, inliers);

  if (!frame.epipole.finite) {
    report.background_mode = BackgroundMode::epipolar_disparity;
    const FlowField fw = epipolar_sgm_flow(frame, cv_fw, bg_mask, opts.infinite_epipole_range, opts.penalties, opts.miss_margin);
    const FlowField back = epipolar_sgm_flow(bw, cv_bw, warp_mask(bg_mask, fw, 2), opts.infinite_epipole_range,
                                             opts.penalties, opts.miss_margin);
    const FlowField semi = left_right_check(fw, back, opts.lr_tolerance);
    report.semi_dense_fraction = static_cast<double>(semi.count_valid()) / std::max<size_t>(1, fw.count_valid());
    return interpolate_dense(semi, img1, bg_mask, cfg.interpolation);
  }

  report.background_mode = BackgroundMode::vz_ratio;
  const VzLabels labels = vz_labels_from_matches(inliers, frame, opts.vz_label_count);
  report.omega_max = labels.omega_max;
  const VzRatioField semi = semi_dense_vz(frame, bw, cv_fw, cv_bw, bg_mask, labels, opts);
  size_t area = 0;
  for (auto v : bg_mask.data) area += v;
  report.semi_dense_fraction = static_cast<double>(semi.count_valid()) / std::max<size_t>(1, area);
  const VzRatioField filled = extrapolate_vz(semi, frame, instances, cfg.extrapolation_samples);

  SuperpixelOptions sp;
  sp.count = cfg.superpixels_for(W, H);
  sp.compactness = cfg.superpixel_compactness;
  SuperpixelGraph graph = compute_superpixels(img1, bg_mask, sp);
  report.superpixels = graph.count;
  SlantedPlaneOptions po = cfg.plane;
  po.label_step = labels.step();
  const SlantedPlaneResult planes = slanted_plane(filled, std::move(graph), po);
  report.plane_sweeps = static_cast<int>(planes.energy_trace.size()) - 1;
  report.plane_energy = planes.energy_trace.back();
  return bg_flow_from_vz(planes.field, frame);
}

}  // namespace

FlowField compose(const FlowField& background, const std::vector<InstanceFlowResult>& instances, const InstanceMap& map) {
  const int W = map.width(), H = map.height();
  FlowField out(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int k = map.labels(x, y);
      const FlowField* src = &background;
      if (k > 0) {
        if (k > static_cast<int>(instances.size())) throw std::invalid_argument("compose: missing instance result");
        src = &instances[k - 1].dense;
      }
      if (src->width() != W || src->height() != H) throw std::invalid_argument("compose: field shape mismatch");
      if (src->is_valid(x, y)) out.set(x, y, src->u(x, y), src->v(x, y));
    }
  return out;
}

PipelineResult run(const Image& img1, const Image& img2, const InstanceMap& instances, const NetParams& net,
                   const PipelineConfig& cfg) {
  cfg.validate();
  const int W = img1.width, H = img1.height;
  if (!img2.same_shape(W, H) || !instances.labels.same_shape(W, H))
    throw std::invalid_argument("run: images and instance map must share dimensions");
  PipelineResult res;
  RunReport& rep = res.report;
  rep.width = W;
  rep.height = H;
  StageTimer timer(rep);

  const FeatureMap f1 = extract_features_aligned(img1, net);
  const FeatureMap f2 = extract_features_aligned(img2, net);
  timer.lap("features");
  const TopKCostVolume cv_fw = aggregate(build_cost_volume(f1, f2, cfg.window, cfg.top_k), cfg.aggregation_iterations,
                                         cfg.aggregation_window);
  SearchWindow back_window{-cfg.window.u_max + 1, -cfg.window.u_min + 1, -cfg.window.v_max + 1, -cfg.window.v_min + 1};
  const TopKCostVolume cv_bw = aggregate(build_cost_volume(f2, f1, back_window, cfg.top_k), cfg.aggregation_iterations,
                                         cfg.aggregation_window);
  timer.lap("cost_volume");
  const SparseMatches matches = confident_matches(cv_fw, cfg.confidence_fraction, cfg.confidence_selector);
  rep.confident_matches = matches.size();
  timer.lap("confident_matches");

  std::vector<InstanceFlowResult> results;
  const FgOptions fg = cfg.fg_options();
  for (int k = 1; k <= instances.num_instances; ++k) {
    InstanceFlowResult r = estimate_instance_flow(instances.mask_of(k), cv_fw, cv_bw, matches, img1, img2, fg);
    r.instance_id = k;
    results.push_back(std::move(r));
  }
  timer.lap("foreground");

  FlowField bg;
  size_t bg_area = 0;
  for (int v : instances.labels.data) bg_area += v == 0;
  if (bg_area > 0) bg = background_flow(img1, instances, matches, cv_fw, cv_bw, cfg, rep);
  else bg = FlowField(W, H);
  timer.lap("background");

  res.flow = compose(bg, results, instances);
  timer.lap("compose");
  for (auto& r : results) {
    r.semi_dense = {};
    r.dense = {};
  }
  rep.instances = std::move(results);
  return res;
}

std::string format_run_report(const RunReport& r) {
  std::string out;
  char buf[256];
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  kv("width", std::to_string(r.width));
  kv("height", std::to_string(r.height));
  kv("confident_matches", std::to_string(r.confident_matches));
  kv("background_matches", std::to_string(r.background_matches));
  kv("background_mode", mode_name(r.background_mode));
  std::string F;
  for (int i = 0; i < 9; ++i) F += (i ? " " : "") + num(r.background_F(i / 3, i % 3));
  kv("background_F", F);
  kv("background_epipole", num(r.background_epipole.x()) + " " + num(r.background_epipole.y()) + " " +
                               num(r.background_epipole.z()));
  kv("background_inliers", std::to_string(r.background_inliers));
  kv("background_median_error", num(r.background_median_error));
  kv("omega_max", num(r.omega_max));
  kv("semi_dense_fraction", num(r.semi_dense_fraction));
  kv("superpixels", std::to_string(r.superpixels));
  kv("plane_sweeps", std::to_string(r.plane_sweeps));
  kv("plane_energy", num(r.plane_energy));
  for (const auto& [name, sec] : r.timings) kv(("time_" + name).c_str(), num(sec));
  out += "\n# instance status confident inliers median_error lr_survival note\n";
  for (const auto& i : r.instances) {
    std::snprintf(buf, sizeof buf, "%d %s %d %d %.4f %.4f ", i.instance_id,
                  i.status == InstanceStatus::epipolar ? "epipolar" : "fallback", i.confident_matches, i.inliers,
                  i.median_error, i.lr_survival);
    out += buf + (i.note.empty() ? std::string("-") : i.note) + "\n";
  }
  return out;
}

}  // namespace oaflow
