#include "oaflow/fgflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oaflow {

void DisparityRange::validate() const {
  if (!(d_min < d_max) || !(step > 0)) throw std::invalid_argument("DisparityRange: require d_min < d_max, step > 0");
}

double miss_penalty(std::span<const Candidate> candidates, double margin) {
  if (candidates.empty()) return margin;
  return -candidates.back().score + margin;
}

std::vector<double> epipolar_cost_profile(std::span<const Candidate> candidates, const Eigen::Vector2d& p,
                                          const Eigen::Vector2d& p_rect, const Eigen::Vector2d& dir,
                                          std::span<const double> disparities, double miss, double tolerance) {
  std::vector<double> cost(disparities.size(), miss);
  std::vector<double> best_dist(disparities.size(), std::numeric_limits<double>::infinity());
  const Eigen::Vector2d normal(-dir.y(), dir.x());
  const double tol2 = tolerance * tolerance;
  for (const auto& c : candidates) {
    const Eigen::Vector2d rel = p + Eigen::Vector2d(c.du, c.dv) - p_rect;
    const double along = rel.dot(dir);
    const double perp = rel.dot(normal);
    if (std::abs(perp) > tolerance) continue;
    const double slack2 = tol2 - perp * perp;
    for (size_t l = 0; l < disparities.size(); ++l) {
      const double t = along - disparities[l];
      const double d2 = t * t;
      if (d2 > slack2) continue;
      if (d2 + perp * perp < best_dist[l]) {
        best_dist[l] = d2 + perp * perp;
        cost[l] = -c.score;
      }
    }
  }
  return cost;
}

std::vector<double> instance_cost_profile(const Eigen::Vector2d& p, const EpipolarFrame& frame,
                                          const TopKCostVolume& cv, const DisparityRange& range) {
  range.validate();
  const Eigen::Vector2d pr = frame.rotation.rectify(p);
  const Eigen::Vector2d dir = direction_away(frame.epipole, pr);
  std::vector<double> disp(range.count());
  for (int l = 0; l < range.count(); ++l) disp[l] = range.value(l);
  const auto cands = cv.at(static_cast<int>(p.x()), static_cast<int>(p.y()));
  return epipolar_cost_profile(cands, p, pr, dir, disp, miss_penalty(cands));
}

FlowField left_right_check(const FlowField& fw, const FlowField& bw, double tol) {
  if (fw.width() != bw.width() || fw.height() != bw.height())
    throw std::invalid_argument("left_right_check: shape mismatch");
  FlowField out = fw;
  for (int y = 0; y < fw.height(); ++y)
    for (int x = 0; x < fw.width(); ++x) {
      if (!fw.is_valid(x, y)) continue;
      if (std::isinf(tol) && tol > 0) continue;
      double bu, bv;
      const bool found = sample_flow(bw, x + fw.u(x, y), y + fw.v(x, y), bu, bv);
      if (!found || std::hypot(fw.u(x, y) + bu, fw.v(x, y) + bv) > tol) out.invalidate(x, y);
    }
  return out;
}

Mask warp_mask(const Mask& mask, const FlowField& flow, int radius) {
  Mask hit(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask(x, y) || !flow.is_valid(x, y)) continue;
      const int tx = static_cast<int>(std::lround(x + flow.u(x, y)));
      const int ty = static_cast<int>(std::lround(y + flow.v(x, y)));
      if (hit.inside(tx, ty)) hit(tx, ty) = 1;
    }
  if (radius <= 0) return hit;
  Mask out(mask.width, mask.height, 0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!hit(x, y)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(mask.height - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(mask.width - 1, x + radius); ++xx) out(xx, yy) = 1;
    }
  return out;
}

FlowField epipolar_sgm_flow(const EpipolarFrame& frame, const TopKCostVolume& cv, const Mask& domain,
                            const DisparityRange& range, const SgmPenalties& penalties, double miss_margin) {
  range.validate();
  const int W = domain.width, H = domain.height;
  FlowField flow(W, H);
  int x0 = W, y0 = H, x1 = -1, y1 = -1;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (domain(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return flow;
  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1, L = range.count();
  std::vector<double> disp(L);
  for (int l = 0; l < L; ++l) disp[l] = range.value(l);

  CostGrid unary(bw, bh, L);
  Mask local(bw, bh, 0);
  std::vector<Eigen::Vector2d> rect(static_cast<size_t>(bw) * bh), dirs(static_cast<size_t>(bw) * bh);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      if (!domain(x + x0, y + y0)) continue;
      const Eigen::Vector2d p(x + x0, y + y0);
      const Eigen::Vector2d pr = frame.rotation.rectify(p);
      Eigen::Vector2d dir;
      try {
        dir = direction_away(frame.epipole, pr);
      } catch (const GeometryError&) {
        continue;  // the epipole itself carries no disparity information
      }
      const size_t i = static_cast<size_t>(y) * bw + x;
      rect[i] = pr;
      dirs[i] = dir;
      local(x, y) = 1;
      const auto cands = cv.at(x + x0, y + y0);
      const auto prof = epipolar_cost_profile(cands, p, pr, dir, disp, miss_penalty(cands, miss_margin));
      std::copy(prof.begin(), prof.end(), unary.at(x, y));
    }
  const CostGrid agg = sgm_aggregate(unary, local, penalties, SgmDirections::four);
  const Raster<int> labels = winner_take_all(agg, local);
  for (int y = 0; y < bh; ++y)
    for (int x = 0; x < bw; ++x) {
      const int l = labels(x, y);
      if (l < 0) continue;
      const size_t i = static_cast<size_t>(y) * bw + x;
      const double d = range.value(l + subpixel_offset(std::span<const double>(agg.at(x, y), L), l));
      const Eigen::Vector2d p2 = rect[i] + d * dirs[i];
      flow.set(x + x0, y + y0, static_cast<float>(p2.x() - (x + x0)), static_cast<float>(p2.y() - (y + y0)));
    }
  return flow;
}

namespace {

FlowField matches_to_flow(int W, int H, std::span<const SparseMatch> matches, const Mask& mask) {
  FlowField f(W, H);
  for (const auto& m : matches) {
    const int x = static_cast<int>(m.p.x()), y = static_cast<int>(m.p.y());
    if (mask.inside(x, y) && mask(x, y)) f.set(x, y, static_cast<float>(m.p2.x() - m.p.x()), static_cast<float>(m.p2.y() - m.p.y()));
  }
  return f;
}

}  // namespace

InstanceFlowResult estimate_instance_flow(const Mask& mask, const TopKCostVolume& cv_fw, const TopKCostVolume& cv_bw,
                                          std::span<const SparseMatch> matches, const Image& img1, const Image& img2,
                                          const FgOptions& opts) {
  const int W = mask.width, H = mask.height;
  if (!img1.same_shape(W, H) || !img2.same_shape(W, H) || cv_fw.width != W || cv_fw.height != H)
    throw std::invalid_argument("estimate_instance_flow: shape mismatch");
  const size_t area = static_cast<size_t>(std::count(mask.data.begin(), mask.data.end(), 1));
  if (area == 0) throw std::invalid_argument("estimate_instance_flow: empty mask");

  InstanceFlowResult res;
  std::vector<SparseMatch> inside;
  for (const auto& m : matches) {
    const int x = static_cast<int>(m.p.x()), y = static_cast<int>(m.p.y());
    if (mask.inside(x, y) && mask(x, y)) inside.push_back(m);
  }
  res.confident_matches = static_cast<int>(inside.size());

  bool epipolar = false;
  if (static_cast<int>(inside.size()) >= std::max(8, opts.min_inliers)) {
    try {
      const RansacResult rr = ransac_f(inside, opts.ransac);
      res.inliers = static_cast<int>(rr.inliers.size());
      res.median_error = rr.median_error;
      if (res.inliers >= opts.min_inliers && rr.median_error <= opts.max_median_error) {
        std::vector<SparseMatch> in, swapped;
        for (int i : rr.inliers) {
          in.push_back(inside[i]);
          swapped.push_back({inside[i].p2, inside[i].p, inside[i].score});
        }
        const EpipolarFrame fw_frame = make_frame(rr.F, fit_rotational_flow(in, rr.F));
        const FundamentalMatrix Fb = rr.F.transposed();
        const EpipolarFrame bw_frame = make_frame(Fb, fit_rotational_flow(swapped, Fb));
        const FlowField fw = epipolar_sgm_flow(fw_frame, cv_fw, mask, opts.range, opts.penalties, opts.miss_margin);
        const Mask bw_domain = warp_mask(mask, fw, 2);
        const FlowField bw = epipolar_sgm_flow(bw_frame, cv_bw, bw_domain, opts.range, opts.penalties, opts.miss_margin);
        res.semi_dense = left_right_check(fw, bw, opts.lr_tolerance);
        const size_t kept = res.semi_dense.count_valid();
        res.lr_survival = static_cast<double>(kept) / static_cast<double>(area);
        epipolar = kept > 0;
        if (!epipolar) res.note = "no pixel survived the left-right check";
      } else {
        res.note = "too few inliers or too much epipolar error";
      }
    } catch (const GeometryError& e) {
      res.note = e.what();
    }
  } else {
    res.note = "too few confident matches";
  }

  if (epipolar) {
    res.status = InstanceStatus::epipolar;
  } else {
    res.status = InstanceStatus::fallback;
    res.semi_dense = matches_to_flow(W, H, inside, mask);
    if (res.semi_dense.count_valid() == 0) {
      // No confident match at all: fall back to each pixel's best raw candidate.
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (!mask(x, y)) continue;
          const auto c = cv_fw.at(x, y);
          if (!c.empty()) res.semi_dense.set(x, y, static_cast<float>(c[0].du), static_cast<float>(c[0].dv));
        }
    }
    if (res.semi_dense.count_valid() == 0) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (mask(x, y)) res.semi_dense.set(x, y, 0.f, 0.f);
    }
  }
  res.dense = interpolate_dense(res.semi_dense, img1, mask, opts.interpolation);
  return res;
}

}  // namespace oaflow
