#include "oaflow/epigeo.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace oaflow {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
  Eigen::Matrix3d s;
  s << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  return s;
}

FundamentalMatrix FundamentalMatrix::from(const Eigen::Matrix3d& raw) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  s(2) = 0.0;
  Eigen::Matrix3d m = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const double norm = m.norm();
  if (!(norm > 0) || !std::isfinite(norm)) throw GeometryError("fundamental matrix is zero or non-finite");
  m /= norm;
  Eigen::Index r, c;
  m.cwiseAbs().maxCoeff(&r, &c);
  if (m(r, c) < 0) m = -m;
  return FundamentalMatrix{m};
}

Eigen::Vector3d epipolar_line(const FundamentalMatrix& F, const Eigen::Vector2d& p) {
  Eigen::Vector3d l = F.m * p.homogeneous();
  const double n = std::hypot(l.x(), l.y());
  if (n < 1e-15 * std::max(1.0, std::abs(l.z()))) throw GeometryError("epipolar line is degenerate (point at epipole)");
  return l / n;
}

double epipolar_distance(const FundamentalMatrix& F, const Eigen::Vector2d& p, const Eigen::Vector2d& p2) {
  const Eigen::Vector3d l = F.m * p.homogeneous();
  const double n = std::hypot(l.x(), l.y());
  if (n == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(l.dot(p2.homogeneous())) / n;
}

namespace {

Eigen::Matrix3d normalizing_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

}  // namespace

FundamentalMatrix eight_point(std::span<const SparseMatch> matches, double max_condition) {
  const size_t n = matches.size();
  if (n < 8) throw GeometryError("eight_point: at least 8 matches required");
  std::vector<Eigen::Vector2d> a(n), b(n);
  for (size_t i = 0; i < n; ++i) {
    a[i] = matches[i].p;
    b[i] = matches[i].p2;
  }
  const Eigen::Matrix3d T1 = normalizing_transform(a);
  const Eigen::Matrix3d T2 = normalizing_transform(b);
  Eigen::MatrixXd A(n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d x = T1 * a[i].homogeneous();
    const Eigen::Vector3d y = T2 * b[i].homogeneous();
    A.row(i) << y.x() * x.x(), y.x() * x.y(), y.x(), y.y() * x.x(), y.y() * x.y(), y.y(), x.x(), x.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // Rank below 8 means the solution is not unique (coplanar or collinear configurations).
  const double s8 = sv.size() >= 8 ? sv(7) : 0.0;
  if (!(s8 > 0) || sv(0) / s8 > max_condition) throw GeometryError("eight_point: ill-conditioned design matrix");
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  Fn = FundamentalMatrix::from(Fn).m;
  return FundamentalMatrix::from(T2.transpose() * Fn * T1);
}

RansacResult ransac_f(std::span<const SparseMatch> matches, const RansacOptions& opts) {
  const int n = static_cast<int>(matches.size());
  if (n < 8) throw GeometryError("ransac_f: at least 8 matches required");
  if (opts.iterations <= 0) throw std::invalid_argument("ransac_f: iterations must be positive");
  RansacResult res;
  res.hypothesis_median_sq.assign(opts.iterations, std::numeric_limits<double>::infinity());
  std::vector<FundamentalMatrix> hyps(opts.iterations);

#pragma omp parallel
  {
    std::vector<double> d2(n);
    std::vector<SparseMatch> sample(8);
#pragma omp for schedule(dynamic, 16)
    for (int it = 0; it < opts.iterations; ++it) {
      std::mt19937_64 rng(mix_seed(opts.seed, static_cast<std::uint64_t>(it)));
      std::array<int, 8> idx{};
      for (int k = 0; k < 8;) {
        const int c = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
        if (std::find(idx.begin(), idx.begin() + k, c) != idx.begin() + k) continue;
        idx[k++] = c;
      }
      for (int k = 0; k < 8; ++k) sample[k] = matches[idx[k]];
      try {
        hyps[it] = eight_point(sample);
      } catch (const GeometryError&) {
        continue;
      }
      for (int i = 0; i < n; ++i) {
        const double d = epipolar_distance(hyps[it], matches[i].p, matches[i].p2);
        d2[i] = d * d;
      }
      std::nth_element(d2.begin(), d2.begin() + n / 2, d2.end());
      res.hypothesis_median_sq[it] = d2[n / 2];
    }
  }

  for (int it = 0; it < opts.iterations; ++it) {
    if (res.hypothesis_median_sq[it] < (res.best_iteration < 0 ? std::numeric_limits<double>::infinity()
                                                                 : res.best_median_sq)) {
      res.best_iteration = it;
      res.best_median_sq = res.hypothesis_median_sq[it];
    }
  }
  if (res.best_iteration < 0) throw GeometryError("ransac_f: every sampled hypothesis was degenerate");
  res.best_hypothesis = hyps[res.best_iteration];

  auto collect = [&](const FundamentalMatrix& F) {
    std::vector<int> in;
    for (int i = 0; i < n; ++i)
      if (epipolar_distance(F, matches[i].p, matches[i].p2) < opts.inlier_threshold) in.push_back(i);
    return in;
  };
  res.F = res.best_hypothesis;
  const std::vector<int> hyp_inliers = collect(res.best_hypothesis);
  if (hyp_inliers.size() >= 8) {
    std::vector<SparseMatch> subset;
    subset.reserve(hyp_inliers.size());
    for (int i : hyp_inliers) subset.push_back(matches[i]);
    try {
      res.F = eight_point(subset);
    } catch (const GeometryError&) {
      res.F = res.best_hypothesis;
    }
  }
  res.inliers = collect(res.F);
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = epipolar_distance(res.F, matches[i].p, matches[i].p2);
  std::nth_element(d.begin(), d.begin() + n / 2, d.end());
  res.median_error = d[n / 2];
  return res;
}

namespace {
constexpr double kRotationalRcond = 1e-3;  // relative eigenvalue cutoff
}

RotationalFlowModel fit_rotational_flow(std::span<const SparseMatch> inliers, const FundamentalMatrix& F) {
  const size_t n = inliers.size();
  if (n < 6) throw GeometryError("fit_rotational_flow: at least 6 matches required");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& m : inliers) mean += m.p;
  mean /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& m : inliers) scale += (m.p - mean).norm();
  scale /= static_cast<double>(n);
  if (!(scale > 0)) throw GeometryError("fit_rotational_flow: matches are not in general position");

  // Residual of p + u_w(p) against the normalized epipolar line of p, linear in the coefficients.
  Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> Jte = Eigen::Matrix<double, 6, 1>::Zero();
  std::vector<Eigen::Vector3d> lines(n);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = inliers[i].p;
    lines[i] = epipolar_line(F, p);
    const double nx = lines[i].x(), ny = lines[i].y();
    const double e = lines[i].dot(p.homogeneous());
    const double xh = (p.x() - mean.x()) / scale, yh = (p.y() - mean.y()) / scale;
    Eigen::Matrix<double, 6, 1> J;
    J << nx, nx * xh, nx * yh, ny, ny * xh, ny * yh;
    JtJ += J * J.transpose();
    Jte += J * e;
  }
  // Minimum-norm solution: directions the epipolar residual barely observes (motion along nearly
  // parallel lines) are dropped instead of being fitted to noise.
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(JtJ);
  const auto& lambda = eig.eigenvalues();
  if (!(lambda(5) > 0)) throw GeometryError("fit_rotational_flow: rank-deficient normal equations");
  Eigen::Matrix<double, 6, 1> ah = Eigen::Matrix<double, 6, 1>::Zero();
  for (int i = 0; i < 6; ++i)
    if (lambda(i) > kRotationalRcond * lambda(5))
      ah -= eig.eigenvectors().col(i) * (eig.eigenvectors().col(i).dot(Jte) / lambda(i));
  if (!ah.allFinite()) throw GeometryError("fit_rotational_flow: rank-deficient normal equations");

  RotationalFlowModel model;
  model.a[1] = ah(1) / scale;
  model.a[2] = ah(2) / scale;
  model.a[0] = ah(0) - model.a[1] * mean.x() - model.a[2] * mean.y();
  model.a[4] = ah(4) / scale;
  model.a[5] = ah(5) / scale;
  model.a[3] = ah(3) - model.a[4] * mean.x() - model.a[5] * mean.y();
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = lines[i].dot(model.rectify(inliers[i].p).homogeneous());
    ss += r * r;
  }
  model.rms_residual = std::sqrt(ss / static_cast<double>(n));
  return model;
}

Epipole epipole_of(const FundamentalMatrix& F) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F.m, Eigen::ComputeFullU);
  Eigen::Vector3d h = svd.matrixU().col(2).normalized();
  Epipole e;
  if (std::abs(h.z()) >= 1e-10) {
    e.finite = true;
    if (h.z() < 0) h = -h;
  } else {
    e.finite = false;
    h.z() = 0.0;
    h.normalize();
    Eigen::Index i;
    h.cwiseAbs().maxCoeff(&i);
    if (h(i) < 0) h = -h;
  }
  e.h = h;
  return e;
}

Eigen::Vector2d direction_away(const Epipole& e, const Eigen::Vector2d& p) {
  if (!e.finite) return e.h.head<2>().normalized();
  const Eigen::Vector2d d = p - e.point();
  const double n = d.norm();
  if (n < 1e-9) throw GeometryError("point coincides with the epipole");
  return d / n;
}

double epipolar_disparity(const Eigen::Vector2d& p_rect, const Eigen::Vector2d& p2, const Epipole& e) {
  return (p2 - p_rect).dot(direction_away(e, p_rect));
}

EpipolarFrame make_frame(const FundamentalMatrix& F, const RotationalFlowModel& rotation) {
  return EpipolarFrame{F, epipole_of(F), rotation};
}

}  // namespace oaflow
