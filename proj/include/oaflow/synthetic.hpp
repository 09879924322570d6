#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "oaflow/epigeo.hpp"
#include "oaflow/image.hpp"
#include "oaflow/matchnet.hpp"

namespace oaflow {

struct CameraIntrinsics {
  double f = 200.0, cx = 128.0, cy = 64.0;

  Eigen::Matrix3d K() const;
  Eigen::Vector2d project(const Eigen::Vector3d& X) const { return {f * X.x() / X.z() + cx, f * X.y() / X.z() + cy}; }
  Eigen::Vector3d ray(double x, double y) const { return {(x - cx) / f, (y - cy) / f, 1.0}; }
};

/// Camera-2 coordinates of a camera-1 point: X2 = R X1 + t.
struct RigidMotion {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& X) const { return R * X + t; }
};

/// Oriented box standing on the ground, posed in camera-1 coordinates.
struct BoxObject {
  Eigen::Vector3d center;
  Eigen::Vector3d half_extent;
  double yaw = 0.0;
};

struct SyntheticSpec {
  int width = 256, height = 128;
  double focal = 200.0;
  int num_objects = 2;
  double camera_height = 1.5;
  double corridor_half_width = 6.0;
  double back_wall_depth = 35.0;
  double ego_forward_min = 0.5, ego_forward_max = 0.9;  // v_z per frame
  double ego_lateral = 0.05;
  double ego_yaw_deg = 0.15;
  double object_speed = 0.6;
  double object_yaw_deg = 2.0;
  bool static_scene = false;  // no ego or object motion
  int supersample = 3;
  int max_flow_u = 44, max_flow_v = 28;  // redraw motions exceeding these on visible pixels
};

struct SyntheticScene {
  CameraIntrinsics camera;
  RigidMotion ego;                     // background body
  std::vector<BoxObject> objects;
  std::vector<RigidMotion> motions;    // per body: 0 background, k object k
  Image img1, img2;
  FlowField gt;                        // valid at every pixel
  InstanceMap instances;
  Mask occluded;                       // occluded in frame 2 or leaving the image
  Mask noc;                            // gt.valid and not occluded
};

/// Ray-cast scene: textured ground, corridor walls and a back wall, plus boxes with their own
/// rigid motion. Ground truth comes from projecting the hit point of each pixel center through
/// both poses; frame 2 is rendered by casting rays into every body at its frame-1 pose, so the
/// same surface point carries the same texture in both frames.
SyntheticScene make_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec = {});

/// Training pairs from non-occluded pixels of a scene: `pixels` random pixels, two examples each
/// (horizontal and vertical strips). Pixels whose patches leave the image are redrawn.
std::vector<TrainingExample> scene_training_examples(const SyntheticScene& scene, int pixels, int R, int patch_size,
                                                     std::uint64_t seed);

/// F = K^-T [t]x R K^-1 for one body. Throws GeometryError for a motion without translation.
FundamentalMatrix fundamental_from_motion(const CameraIntrinsics& cam, const RigidMotion& motion);

}  // namespace oaflow
