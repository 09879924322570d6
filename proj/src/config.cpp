#include "oaflow/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace oaflow {

namespace {

struct Entry {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("config: bad value for " + key + ": '" + s + "'");
  return v;
}

// Shortest text that parses back to the same value.
template <typename T>
std::string show(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T, typename Access>
Entry num(std::string key, Access access) {
  return {key,
          [key, access](PipelineConfig& c, const std::string& s) { access(c) = parse_number<T>(key, s); },
          [access](const PipelineConfig& c) { return show(access(const_cast<PipelineConfig&>(c))); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"checkpoint", [](PipelineConfig& c, const std::string& s) { c.checkpoint = s; },
       [](const PipelineConfig& c) { return c.checkpoint; }},
      num<int>("top_k", [](PipelineConfig& c) -> int& { return c.top_k; }),
      num<int>("window_u_min", [](PipelineConfig& c) -> int& { return c.window.u_min; }),
      num<int>("window_u_max", [](PipelineConfig& c) -> int& { return c.window.u_max; }),
      num<int>("window_v_min", [](PipelineConfig& c) -> int& { return c.window.v_min; }),
      num<int>("window_v_max", [](PipelineConfig& c) -> int& { return c.window.v_max; }),
      num<int>("aggregation_iterations", [](PipelineConfig& c) -> int& { return c.aggregation_iterations; }),
      num<int>("aggregation_window", [](PipelineConfig& c) -> int& { return c.aggregation_window; }),
      num<double>("confidence_fraction", [](PipelineConfig& c) -> double& { return c.confidence_fraction; }),
      {"confidence_selector",
       [](PipelineConfig& c, const std::string& s) {
         if (s == "top_score") c.confidence_selector = ConfidenceSelector::top_score;
         else if (s == "entropy") c.confidence_selector = ConfidenceSelector::entropy;
         else throw ConfigError("config: confidence_selector must be top_score or entropy");
       },
       [](const PipelineConfig& c) {
         return std::string(c.confidence_selector == ConfidenceSelector::entropy ? "entropy" : "top_score");
       }},
      num<int>("patch_range", [](PipelineConfig& c) -> int& { return c.patch_range; }),
      num<double>("sgm_lambda1", [](PipelineConfig& c) -> double& { return c.penalties.small; }),
      num<double>("sgm_lambda2", [](PipelineConfig& c) -> double& { return c.penalties.large; }),
      num<int>("ransac_iterations", [](PipelineConfig& c) -> int& { return c.ransac.iterations; }),
      num<double>("ransac_threshold", [](PipelineConfig& c) -> double& { return c.ransac.inlier_threshold; }),
      num<std::uint64_t>("seed", [](PipelineConfig& c) -> std::uint64_t& { return c.ransac.seed; }),
      num<int>("fg_min_inliers", [](PipelineConfig& c) -> int& { return c.fg_min_inliers; }),
      num<double>("fg_max_median_error", [](PipelineConfig& c) -> double& { return c.fg_max_median_error; }),
      num<double>("lr_tolerance", [](PipelineConfig& c) -> double& { return c.lr_tolerance; }),
      num<double>("miss_margin", [](PipelineConfig& c) -> double& { return c.miss_margin; }),
      num<double>("disparity_min", [](PipelineConfig& c) -> double& { return c.disparity.d_min; }),
      num<double>("disparity_max", [](PipelineConfig& c) -> double& { return c.disparity.d_max; }),
      num<double>("disparity_step", [](PipelineConfig& c) -> double& { return c.disparity.step; }),
      num<int>("vz_labels", [](PipelineConfig& c) -> int& { return c.vz_labels; }),
      num<int>("extrapolation_samples", [](PipelineConfig& c) -> int& { return c.extrapolation_samples; }),
      num<int>("superpixels", [](PipelineConfig& c) -> int& { return c.superpixels; }),
      num<double>("superpixel_compactness", [](PipelineConfig& c) -> double& { return c.superpixel_compactness; }),
      num<double>("plane_huber_scale", [](PipelineConfig& c) -> double& { return c.plane.huber_scale; }),
      num<double>("plane_coplanar_weight", [](PipelineConfig& c) -> double& { return c.plane.coplanar_weight; }),
      num<double>("plane_hinge_penalty", [](PipelineConfig& c) -> double& { return c.plane.hinge_penalty; }),
      num<double>("plane_occlusion_penalty", [](PipelineConfig& c) -> double& { return c.plane.occlusion_penalty; }),
      num<int>("plane_max_sweeps", [](PipelineConfig& c) -> int& { return c.plane.max_sweeps; }),
      num<double>("plane_tolerance", [](PipelineConfig& c) -> double& { return c.plane.tolerance; }),
      num<int>("interp_neighbors", [](PipelineConfig& c) -> int& { return c.interpolation.neighbors; }),
      num<double>("interp_edge_weight", [](PipelineConfig& c) -> double& { return c.interpolation.edge_weight; }),
      num<double>("interp_distance_scale", [](PipelineConfig& c) -> double& { return c.interpolation.distance_scale; }),
      num<int>("interp_smoothing_sweeps", [](PipelineConfig& c) -> int& { return c.interpolation.smoothing_sweeps; }),
      num<double>("interp_smoothing_edge_beta",
                  [](PipelineConfig& c) -> double& { return c.interpolation.smoothing_edge_beta; }),
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void PipelineConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  need(top_k > 0, "top_k must be positive");
  need(window.u_min < window.u_max && window.v_min < window.v_max, "search window must be non-empty");
  need(aggregation_iterations >= 0, "aggregation_iterations must be >= 0");
  need(aggregation_window >= 1 && aggregation_window % 2 == 1, "aggregation_window must be odd and positive");
  need(confidence_fraction > 0 && confidence_fraction <= 1, "confidence_fraction must be in (0, 1]");
  need(patch_range > 0 && patch_range % 2 == 0, "patch_range must be positive and even");
  need(penalties.small >= 0 && penalties.large >= penalties.small, "require 0 <= sgm_lambda1 <= sgm_lambda2");
  need(ransac.iterations > 0 && ransac.inlier_threshold > 0, "ransac settings must be positive");
  need(fg_min_inliers >= 8, "fg_min_inliers must be at least 8");
  need(fg_max_median_error > 0 && lr_tolerance > 0, "tolerances must be positive");
  need(disparity.d_min < disparity.d_max && disparity.step > 0, "bad disparity range");
  need(vz_labels >= 2, "vz_labels must be at least 2");
  need(extrapolation_samples >= 2, "extrapolation_samples must be at least 2");
  need(superpixels >= 1 && superpixel_compactness > 0, "bad superpixel settings");
  need(plane.huber_scale > 0 && plane.max_sweeps >= 0, "bad slanted-plane settings");
  need(interpolation.neighbors >= 1 && interpolation.distance_scale > 0, "bad interpolation settings");
}

FgOptions PipelineConfig::fg_options() const {
  FgOptions o;
  o.range = disparity;
  o.penalties = penalties;
  o.ransac = ransac;
  o.min_inliers = fg_min_inliers;
  o.max_median_error = fg_max_median_error;
  o.lr_tolerance = lr_tolerance;
  o.miss_margin = miss_margin;
  o.interpolation = interpolation;
  return o;
}

BgOptions PipelineConfig::bg_options() const {
  BgOptions o;
  o.ransac = ransac;
  o.vz_label_count = vz_labels;
  o.penalties = penalties;
  o.miss_margin = miss_margin;
  o.lr_tolerance = lr_tolerance;
  o.infinite_epipole_range = disparity;
  return o;
}

int PipelineConfig::superpixels_for(int width, int height) const {
  const double scale = static_cast<double>(width) * height / (1242.0 * 375.0);
  return std::max(4, static_cast<int>(std::lround(superpixels * scale)));
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& e : entries())
      if (e.key == key) {
        e.set(c, value);
        found = true;
        break;
      }
    if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& c) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(c) + "\n";
  return out;
}

}  // namespace oaflow
