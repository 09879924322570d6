#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "oaflow/costvol.hpp"

namespace oaflow {

/// Raised for degenerate configurations (point at the epipole, ill-conditioned samples, ...).
struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rank-2 3x3 matrix with unit Frobenius norm; the largest-magnitude entry is positive.
struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();

  /// Enforces rank 2, unit norm and the sign convention.
  static FundamentalMatrix from(const Eigen::Matrix3d& raw);
  FundamentalMatrix transposed() const { return from(m.transpose()); }
};

/// Homogeneous epipole. `h` has unit norm; finite epipoles have h.z() > 0.
struct Epipole {
  Eigen::Vector3d h = Eigen::Vector3d::UnitZ();
  bool finite = true;

  Eigen::Vector2d point() const { return h.head<2>() / h.z(); }
};

/// Linearized rotational flow u_w(p) = (a1 + a2 x + a3 y, a4 + a5 x + a6 y).
struct RotationalFlowModel {
  std::array<double, 6> a{};
  double rms_residual = 0.0;

  Eigen::Vector2d flow(const Eigen::Vector2d& p) const {
    return {a[0] + a[1] * p.x() + a[2] * p.y(), a[3] + a[4] * p.x() + a[5] * p.y()};
  }
  Eigen::Vector2d rectify(const Eigen::Vector2d& p) const { return p + flow(p); }
};

/// Geometry of one rigid body between the two frames.
struct EpipolarFrame {
  FundamentalMatrix F;
  Epipole epipole;  // in image 2
  RotationalFlowModel rotation;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& t);

/// l' = F p~, scaled so that a^2 + b^2 = 1. Throws GeometryError when p is the epipole.
Eigen::Vector3d epipolar_line(const FundamentalMatrix& F, const Eigen::Vector2d& p);
/// Distance from p2 to the epipolar line of p.
double epipolar_distance(const FundamentalMatrix& F, const Eigen::Vector2d& p, const Eigen::Vector2d& p2);

/// Hartley-normalized linear 8-point estimate with rank-2 enforcement.
/// Throws GeometryError for fewer than 8 matches or an ill-conditioned design matrix.
FundamentalMatrix eight_point(std::span<const SparseMatch> matches, double max_condition = 1e8);

struct RansacOptions {
  int iterations = 2000;
  double inlier_threshold = 1.0;  // pixels
  std::uint64_t seed = 0x5eed;
};

struct RansacResult {
  FundamentalMatrix F;               // refit on the inliers of the best hypothesis
  FundamentalMatrix best_hypothesis; // minimal-sample winner
  std::vector<int> inliers;          // indices with distance < threshold under F
  double best_median_sq = 0.0;       // median squared distance of the winning hypothesis
  int best_iteration = -1;
  std::vector<double> hypothesis_median_sq;  // +inf for degenerate samples
  double median_error = 0.0;         // median distance under the final F, all matches
};

/// RANSAC over minimal 8-point samples, choosing the hypothesis with the smallest median squared
/// point-to-epipolar-line distance. Iteration i draws its sample from a seed derived from
/// (seed, i), so the result does not depend on the number of threads.
RansacResult ransac_f(std::span<const SparseMatch> matches, const RansacOptions& opts = {});

/// Least-squares affine rotational field that moves each p onto the epipolar line through its match,
/// solved by a truncated pseudo-inverse so that nearly unobservable (along-line) directions stay at zero.
RotationalFlowModel fit_rotational_flow(std::span<const SparseMatch> inliers, const FundamentalMatrix& F);

/// Left null vector of F (o'^T F = 0), the epipole in the second image.
Epipole epipole_of(const FundamentalMatrix& F);

/// Unit direction pointing away from the epipole at p. For epipoles at infinity this is the
/// stored direction (h.x, h.y). Throws GeometryError when p coincides with a finite epipole.
Eigen::Vector2d direction_away(const Epipole& e, const Eigen::Vector2d& p);

/// Signed displacement of p2 from p_rect along the epipolar direction; positive moves away from o'.
double epipolar_disparity(const Eigen::Vector2d& p_rect, const Eigen::Vector2d& p2, const Epipole& e);

/// Builds a frame (epipole included) from F and a rotational model.
EpipolarFrame make_frame(const FundamentalMatrix& F, const RotationalFlowModel& rotation);

/// Deterministic 64-bit mixing used for per-task seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace oaflow
