#include "oaflow/bgflow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oaflow {

size_t VzRatioField::count_valid() const {
  return static_cast<size_t>(std::count(valid.data.begin(), valid.data.end(), 1));
}

double vz_disparity(double delta, double omega) {
  if (!(omega < 1.0)) throw std::domain_error("vz_disparity: omega must be below 1");
  if (!(delta >= 0.0)) throw std::domain_error("vz_disparity: delta must be non-negative");
  return delta * omega / (1.0 - omega);
}

double vz_from_disparity(double delta, double d) { return d / (delta + d); }

double epipole_distance(const EpipolarFrame& frame, const Eigen::Vector2d& p) {
  if (!frame.epipole.finite) return std::numeric_limits<double>::infinity();
  return (frame.rotation.rectify(p) - frame.epipole.point()).norm();
}

std::vector<double> VzLabels::values() const {
  std::vector<double> v(count);
  for (int l = 0; l < count; ++l) v[l] = value(l);
  return v;
}

VzLabels vz_labels_from_matches(std::span<const SparseMatch> matches, const EpipolarFrame& frame, int count) {
  if (count < 2) throw std::invalid_argument("vz_labels_from_matches: need at least 2 labels");
  VzLabels labels;
  labels.count = count;
  std::vector<double> omegas;
  if (frame.epipole.finite) {
    for (const auto& m : matches) {
      const Eigen::Vector2d pr = frame.rotation.rectify(m.p);
      const double delta = (pr - frame.epipole.point()).norm();
      if (delta < 1e-6) continue;
      const double d = epipolar_disparity(pr, m.p2, frame.epipole);
      if (delta + d > 0) omegas.push_back(vz_from_disparity(delta, d));
    }
  }
  if (omegas.empty()) return labels;
  const size_t k = std::min(omegas.size() - 1, static_cast<size_t>(std::floor(0.99 * (omegas.size() - 1))));
  std::nth_element(omegas.begin(), omegas.begin() + k, omegas.end());
  labels.omega_max = std::clamp(1.2 * omegas[k], 1e-3, 0.95);
  return labels;
}

SparseMatches background_matches(std::span<const SparseMatch> matches, const InstanceMap& instances) {
  SparseMatches out;
  for (const auto& m : matches) {
    const int x = static_cast<int>(m.p.x()), y = static_cast<int>(m.p.y());
    if (instances.labels.inside(x, y) && instances.labels(x, y) == 0) out.push_back(m);
  }
  return out;
}

EpipolarFrame background_frame(std::span<const SparseMatch> matches, const InstanceMap& instances,
                               const RansacOptions& opts) {
  const SparseMatches bg = background_matches(matches, instances);
  if (bg.size() < 8) throw GeometryError("background_frame: fewer than 8 background matches");
  const RansacResult rr = ransac_f(bg, opts);
  SparseMatches in;
  for (int i : rr.inliers) in.push_back(bg[i]);
  return make_frame(rr.F, fit_rotational_flow(in, rr.F));
}

RotationalFlowModel fit_affine_flow(std::span<const SparseMatch> matches, double tolerance, double* explained) {
  if (matches.size() < 3) throw GeometryError("fit_affine_flow: at least 3 matches required");
  auto fit = [&](const std::vector<size_t>& use) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d bu = Eigen::Vector3d::Zero(), bv = Eigen::Vector3d::Zero();
    for (size_t i : use) {
      const auto& m = matches[i];
      const Eigen::Vector3d r(1.0, m.p.x(), m.p.y());
      A += r * r.transpose();
      bu += (m.p2.x() - m.p.x()) * r;
      bv += (m.p2.y() - m.p.y()) * r;
    }
    const auto solver = A.ldlt();
    const Eigen::Vector3d cu = solver.solve(bu), cv = solver.solve(bv);
    RotationalFlowModel model;
    model.a = {cu(0), cu(1), cu(2), cv(0), cv(1), cv(2)};
    return model;
  };
  auto within = [&](const RotationalFlowModel& model) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < matches.size(); ++i)
      if ((model.rectify(matches[i].p) - matches[i].p2).norm() <= tolerance) idx.push_back(i);
    return idx;
  };
  std::vector<size_t> all(matches.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  RotationalFlowModel model = fit(all);
  const auto close = within(model);
  if (close.size() >= 3) model = fit(close);
  const auto final_close = within(model);
  if (explained) *explained = static_cast<double>(final_close.size()) / static_cast<double>(matches.size());
  double ss = 0.0;
  for (size_t i : final_close) ss += (model.rectify(matches[i].p) - matches[i].p2).squaredNorm();
  model.rms_residual = final_close.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(final_close.size()));
  return model;
}

BackgroundMotion estimate_background_motion(std::span<const SparseMatch> matches, const InstanceMap& instances,
                                            const BgOptions& opts) {
  const SparseMatches bg = background_matches(matches, instances);
  if (bg.size() < 8) throw GeometryError("background: fewer than 8 background matches");
  BackgroundMotion motion;
  double explained = 0.0;
  const RotationalFlowModel affine = fit_affine_flow(bg, opts.translation_free_tolerance, &explained);
  if (explained >= opts.translation_free_fraction) {
    motion.rotation = affine;
    return motion;
  }
  const RansacResult rr = ransac_f(bg, opts.ransac);
  SparseMatches in;
  for (int i : rr.inliers) in.push_back(bg[i]);
  motion.rotation = fit_rotational_flow(in, rr.F);
  motion.epipolar = make_frame(rr.F, motion.rotation);
  motion.inliers = rr.inliers;
  motion.median_error = rr.median_error;
  return motion;
}

EpipolarFrame backward_frame(const EpipolarFrame& fw, std::span<const SparseMatch> inliers) {
  SparseMatches swapped;
  swapped.reserve(inliers.size());
  for (const auto& m : inliers) swapped.push_back({m.p2, m.p, m.score});
  const FundamentalMatrix Fb = fw.F.transposed();
  return make_frame(Fb, fit_rotational_flow(swapped, Fb));
}

VzRatioField sgm_vz(const EpipolarFrame& frame, const TopKCostVolume& cv, const Mask& domain,
                    std::span<const double> omega_labels, const SgmPenalties& penalties, double miss_margin) {
  if (!frame.epipole.finite) throw GeometryError("sgm_vz: the vz parameterization needs a finite epipole");
  if (omega_labels.empty()) throw std::invalid_argument("sgm_vz: no labels");
  for (double w : omega_labels)
    if (!(w < 1.0)) throw std::domain_error("sgm_vz: labels must be below 1");
  const int W = domain.width, H = domain.height, L = static_cast<int>(omega_labels.size());
  VzRatioField field(W, H);
  const Eigen::Vector2d o = frame.epipole.point();

  CostGrid unary(W, H, L);
  Mask local(W, H, 0);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < H; ++y) {
    std::vector<double> disp(L);
    for (int x = 0; x < W; ++x) {
      if (!domain(x, y)) continue;
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d pr = frame.rotation.rectify(p);
      const double delta = (pr - o).norm();
      if (delta < 1e-9) continue;
      const Eigen::Vector2d dir = (pr - o) / delta;
      for (int l = 0; l < L; ++l) disp[l] = vz_disparity(delta, omega_labels[l]);
      const auto cands = cv.at(x, y);
      const auto prof = epipolar_cost_profile(cands, p, pr, dir, disp, miss_penalty(cands, miss_margin));
      std::copy(prof.begin(), prof.end(), unary.at(x, y));
      local(x, y) = 1;
    }
  }
  const CostGrid agg = sgm_aggregate(unary, local, penalties, SgmDirections::four);
  const Raster<int> labels = winner_take_all(agg, local);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int l = labels(x, y);
      if (l < 0) continue;
      const double off = subpixel_offset(std::span<const double>(agg.at(x, y), L), l);
      double w = omega_labels[l];
      if (off > 0 && l + 1 < L) w += off * (omega_labels[l + 1] - omega_labels[l]);
      if (off < 0 && l > 0) w += off * (omega_labels[l] - omega_labels[l - 1]);
      field.set(x, y, w);
    }
  return field;
}

FlowField bg_flow_from_vz(const VzRatioField& field, const EpipolarFrame& frame) {
  const int W = field.width(), H = field.height();
  FlowField flow(W, H);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!field.valid(x, y)) continue;
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d pr = frame.rotation.rectify(p);
      Eigen::Vector2d p2 = pr;
      if (frame.epipole.finite) {
        const Eigen::Vector2d rel = pr - frame.epipole.point();
        const double delta = rel.norm();
        if (delta >= 1e-9) p2 += vz_disparity(delta, field.omega(x, y)) * rel / delta;
      }
      flow.set(x, y, static_cast<float>(p2.x() - x), static_cast<float>(p2.y() - y));
    }
  return flow;
}

VzRatioField semi_dense_vz(const EpipolarFrame& fw, const EpipolarFrame& bw, const TopKCostVolume& cv_fw,
                           const TopKCostVolume& cv_bw, const Mask& domain, const VzLabels& labels,
                           const BgOptions& opts) {
  const std::vector<double> fw_labels = labels.values();
  std::vector<double> bw_labels(fw_labels.size());
  // A point at omega in frame 1 sits at -omega / (1 - omega) seen from frame 2.
  for (size_t l = 0; l < fw_labels.size(); ++l) bw_labels[l] = -fw_labels[l] / (1.0 - fw_labels[l]);
  std::reverse(bw_labels.begin(), bw_labels.end());

  VzRatioField field = sgm_vz(fw, cv_fw, domain, fw_labels, opts.penalties, opts.miss_margin);
  const FlowField flow_fw = bg_flow_from_vz(field, fw);
  const Mask bw_domain = warp_mask(domain, flow_fw, 2);
  const VzRatioField field_bw = sgm_vz(bw, cv_bw, bw_domain, bw_labels, opts.penalties, opts.miss_margin);
  const FlowField kept = left_right_check(flow_fw, bg_flow_from_vz(field_bw, bw), opts.lr_tolerance);
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x)
      if (field.valid(x, y) && !kept.is_valid(x, y)) field.invalidate(x, y);
  return field;
}

VzRatioField extrapolate_vz(const VzRatioField& field, const EpipolarFrame& frame, const InstanceMap& instances,
                            int max_samples) {
  const int W = field.width(), H = field.height();
  if (!instances.labels.same_shape(W, H)) throw std::invalid_argument("extrapolate_vz: shape mismatch");
  VzRatioField out = field;
  const bool finite = frame.epipole.finite;
  const Eigen::Vector2d o = finite ? frame.epipole.point() : Eigen::Vector2d::Zero();

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < H; ++y) {
    std::vector<double> ds, ws;
    for (int x = 0; x < W; ++x) {
      if (field.valid(x, y) || instances.labels(x, y) != 0) continue;
      const Eigen::Vector2d p(x, y);
      Eigen::Vector2d toward;
      double reach = std::numeric_limits<double>::infinity();
      if (finite) {
        toward = o - p;
        reach = toward.norm();
        if (reach < 1e-9) continue;
        toward /= reach;
      } else {
        toward = -frame.epipole.h.head<2>().normalized();
      }
      ds.clear();
      ws.clear();
      int lastx = x, lasty = y;
      for (int step = 1; static_cast<int>(ws.size()) < max_samples && step <= reach; ++step) {
        const int sx = static_cast<int>(std::lround(x + step * toward.x()));
        const int sy = static_cast<int>(std::lround(y + step * toward.y()));
        if (sx < 0 || sy < 0 || sx >= W || sy >= H) break;
        if (sx == lastx && sy == lasty) continue;
        lastx = sx;
        lasty = sy;
        if (!field.valid(sx, sy) || instances.labels(sx, sy) != 0) continue;
        ds.push_back(finite ? epipole_distance(frame, Eigen::Vector2d(sx, sy)) : 0.0);
        ws.push_back(field.omega(sx, sy));
      }
      if (ws.size() < 2) continue;
      const double n = static_cast<double>(ws.size());
      double md = 0, mw = 0;
      for (size_t i = 0; i < ws.size(); ++i) {
        md += ds[i];
        mw += ws[i];
      }
      md /= n;
      mw /= n;
      double sdd = 0, sdw = 0;
      for (size_t i = 0; i < ws.size(); ++i) {
        sdd += (ds[i] - md) * (ds[i] - md);
        sdw += (ds[i] - md) * (ws[i] - mw);
      }
      double w = mw;
      if (finite && sdd > 1e-9 * n * std::max(1.0, md * md)) w = mw + sdw / sdd * (epipole_distance(frame, p) - md);
      out.set(x, y, std::min(w, 1.0 - 1e-6));
    }
  }
  return out;
}

}  // namespace oaflow
