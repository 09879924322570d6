#include "oaflow/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace oaflow {

Eigen::Matrix3d CameraIntrinsics::K() const {
  Eigen::Matrix3d k;
  k << f, 0, cx, 0, f, cy, 0, 0, 1;
  return k;
}

FundamentalMatrix fundamental_from_motion(const CameraIntrinsics& cam, const RigidMotion& motion) {
  if (motion.t.norm() < 1e-12) throw GeometryError("fundamental_from_motion: no translation");
  const Eigen::Matrix3d Kinv = cam.K().inverse();
  return FundamentalMatrix::from(Kinv.transpose() * skew(motion.t) * motion.R * Kinv);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = M_PI / 180.0;

Eigen::Matrix3d yaw_matrix(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
}

struct Hit {
  double t = kInf;
  int body = -1;
  int surface = -1;
  Eigen::Vector3d X1;  // camera-1 coordinates of the surface point
  double u = 0, v = 0; // surface texture coordinates in metres
};

struct World {
  double h, w, depth;
  std::vector<BoxObject> boxes;
};

void hit_background(const World& wd, const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& best) {
  auto consider = [&](double t, int surface) {
    if (!(t > 1e-9) || t >= best.t) return false;
    const Eigen::Vector3d X = o + t * d;
    const double eps = 1e-9;
    if (X.z() < 1e-3 || X.z() > wd.depth + eps || std::abs(X.x()) > wd.w + eps || X.y() > wd.h + eps) return false;
    best.t = t;
    best.body = 0;
    best.surface = surface;
    best.X1 = X;
    switch (surface) {
      case 0: best.u = X.x(); best.v = X.z(); break;
      case 1: case 2: best.u = X.z(); best.v = X.y(); break;
      default: best.u = X.x(); best.v = X.y(); break;
    }
    return true;
  };
  if (d.y() != 0) consider((wd.h - o.y()) / d.y(), 0);
  if (d.x() != 0) {
    consider((-wd.w - o.x()) / d.x(), 1);
    consider((wd.w - o.x()) / d.x(), 2);
  }
  if (d.z() != 0) consider((wd.depth - o.z()) / d.z(), 3);
}

void hit_box(const BoxObject& b, int body, const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& best) {
  const Eigen::Matrix3d R = yaw_matrix(b.yaw);
  const Eigen::Vector3d ol = R.transpose() * (o - b.center), dl = R.transpose() * d;
  double tn = -kInf, tf = kInf;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dl(a)) < 1e-15) {
      if (std::abs(ol(a)) > b.half_extent(a)) return;
      continue;
    }
    double t0 = (-b.half_extent(a) - ol(a)) / dl(a), t1 = (b.half_extent(a) - ol(a)) / dl(a);
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tn) {
      tn = t0;
      axis = a;
    }
    tf = std::min(tf, t1);
  }
  if (axis < 0 || tn > tf || !(tn > 1e-9) || tn >= best.t) return;
  const Eigen::Vector3d L = ol + tn * dl;
  best.t = tn;
  best.body = body;
  best.surface = 10 * body + 2 * axis + (L(axis) > 0 ? 1 : 0);
  best.X1 = o + tn * d;
  best.u = L((axis + 1) % 3);
  best.v = L((axis + 2) % 3);
}

// First surface along a camera-1 ray.
Hit cast1(const World& wd, const Eigen::Vector3d& d) {
  Hit h;
  hit_background(wd, Eigen::Vector3d::Zero(), d, h);
  for (size_t k = 0; k < wd.boxes.size(); ++k) hit_box(wd.boxes[k], static_cast<int>(k) + 1, Eigen::Vector3d::Zero(), d, h);
  return h;
}

// First surface along a camera-2 ray: each body is intersected at its frame-1 pose.
Hit cast2(const World& wd, const std::vector<RigidMotion>& motions, const Eigen::Vector3d& d) {
  Hit h;
  for (size_t k = 0; k < motions.size(); ++k) {
    const Eigen::Matrix3d Rt = motions[k].R.transpose();
    const Eigen::Vector3d o = -Rt * motions[k].t, dl = Rt * d;
    if (k == 0)
      hit_background(wd, o, dl, h);
    else
      hit_box(wd.boxes[k - 1], static_cast<int>(k), o, dl, h);
  }
  return h;
}

std::uint64_t hash64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::int64_t i, std::int64_t j, std::uint64_t key) {
  const std::uint64_t h = hash64(key ^ hash64(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL ^
                                              hash64(static_cast<std::uint64_t>(j))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(double u, double v, std::uint64_t key) {
  const double fu = std::floor(u), fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
  double a = u - fu, b = v - fv;
  a = a * a * (3 - 2 * a);
  b = b * b * (3 - 2 * b);
  const double v00 = lattice(i, j, key), v10 = lattice(i + 1, j, key);
  const double v01 = lattice(i, j + 1, key), v11 = lattice(i + 1, j + 1, key);
  return (v00 * (1 - a) + v10 * a) * (1 - b) + (v01 * (1 - a) + v11 * a) * b;
}

// Multi-octave texture; octaves finer than the pixel footprint fade out so both frames stay band-limited.
double texture(int surface, double u, double v, double footprint, std::uint64_t seed) {
  const std::uint64_t key = hash64(seed ^ (static_cast<std::uint64_t>(surface) << 32));
  double sum = 0.0, norm = 0.0, freq = 1.2, amp = 1.0;
  for (int o = 0; o < 5; ++o) {
    const double w = std::clamp(2.0 - 4.0 * freq * footprint, 0.0, 1.0);
    sum += w * amp * (value_noise(u * freq, v * freq, key + o) - 0.5);
    norm += amp;
    freq *= 2.0;
    amp *= 0.7;
  }
  const double offset = 0.15 * (static_cast<double>(hash64(key) >> 11) * 0x1.0p-53 - 0.5);
  return std::clamp(0.5 + offset + 2.2 * sum / norm, 0.0, 1.0);
}

}  // namespace

SyntheticScene make_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec) {
  if (spec.width < 8 || spec.height < 8 || spec.supersample < 1 || spec.num_objects < 0)
    throw std::invalid_argument("make_synthetic_scene: bad spec");
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  SyntheticScene sc;
  sc.camera = {spec.focal, spec.width / 2.0, spec.height / 2.0};
  const int W = spec.width, H = spec.height;
  World wd{spec.camera_height, spec.corridor_half_width, spec.back_wall_depth, {}};

  for (int attempt = 0; attempt < 200; ++attempt) {
    // Ego motion: camera-2 pose (center C, yaw) in camera-1 coordinates.
    RigidMotion ego;
    if (!spec.static_scene) {
      const Eigen::Vector3d C(uni(-spec.ego_lateral, spec.ego_lateral), 0.0, uni(spec.ego_forward_min, spec.ego_forward_max));
      const Eigen::Matrix3d Rc = yaw_matrix(uni(-spec.ego_yaw_deg, spec.ego_yaw_deg) * kDeg);
      ego.R = Rc.transpose();
      ego.t = -Rc.transpose() * C;
    }
    wd.boxes.clear();
    std::vector<RigidMotion> motions{ego};
    for (int k = 0; k < spec.num_objects; ++k) {
      BoxObject b;
      b.half_extent = {uni(0.8, 1.0), uni(0.65, 0.85), uni(1.6, 2.2)};
      const double side = (k % 2 == 0) ? -1.0 : 1.0;
      const double lim = spec.corridor_half_width - 2.5;
      b.center = {side * uni(0.8, lim), spec.camera_height - b.half_extent.y(), uni(8.0, 18.0)};
      b.yaw = uni(-30.0, 30.0) * kDeg;
      wd.boxes.push_back(b);
      RigidMotion own;
      if (!spec.static_scene) {
        const Eigen::Matrix3d Ro = yaw_matrix(uni(-spec.object_yaw_deg, spec.object_yaw_deg) * kDeg);
        const Eigen::Vector3d v(uni(-0.5, 0.5) * spec.object_speed, 0.0, uni(-1.0, 1.0) * spec.object_speed);
        own.R = Ro;
        own.t = b.center - Ro * b.center + v;
      }
      motions.push_back({ego.R * own.R, ego.R * own.t + ego.t});
    }

    FlowField gt(W, H);
    Raster<int> labels(W, H, 0);
    Mask occluded(W, H, 0);
    bool ok = true;
    std::vector<int> visible(spec.num_objects + 1, 0);
#pragma omp parallel for schedule(static) reduction(&& : ok)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Hit h = cast1(wd, sc.camera.ray(x, y));
        if (h.body < 0) {
          ok = false;
          continue;
        }
        labels(x, y) = h.body;
        const Eigen::Vector3d X2 = motions[h.body].apply(h.X1);
        if (X2.z() < 0.1) {
          ok = false;
          continue;
        }
        const Eigen::Vector2d p2 = sc.camera.project(X2);
        gt.set(x, y, static_cast<float>(p2.x() - x), static_cast<float>(p2.y() - y));
        bool occ = p2.x() < 0 || p2.y() < 0 || p2.x() > W - 1 || p2.y() > H - 1;
        if (!occ) {
          const Hit h2 = cast2(wd, motions, sc.camera.ray(p2.x(), p2.y()));
          occ = h2.body != h.body || std::abs(h2.t - X2.z()) > 1e-6 * (1.0 + X2.z());
        }
        occluded(x, y) = occ ? 1 : 0;
        if (!occ && (std::abs(p2.x() - x) > spec.max_flow_u || std::abs(p2.y() - y) > spec.max_flow_v)) ok = false;
      }
    if (!ok) continue;
    for (int v : labels.data) ++visible[v];
    if (std::any_of(visible.begin() + 1, visible.end(), [](int n) { return n < 200; })) continue;

    sc.ego = ego;
    sc.objects = wd.boxes;
    sc.motions = motions;
    sc.gt = std::move(gt);
    sc.instances = make_instance_map(std::move(labels));
    sc.occluded = occluded;
    sc.noc = Mask(W, H, 0);
    for (int i = 0; i < W * H; ++i) sc.noc[i] = sc.gt.valid[i] && !occluded[i];

    const int S = spec.supersample;
    const std::uint64_t tex_seed = hash64(seed);
    sc.img1 = Image(W, H);
    sc.img2 = Image(W, H);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double a1 = 0, a2 = 0;
        for (int sy = 0; sy < S; ++sy)
          for (int sx = 0; sx < S; ++sx) {
            const Eigen::Vector3d d = sc.camera.ray(x + (sx + 0.5) / S - 0.5, y + (sy + 0.5) / S - 0.5);
            const Hit h1 = cast1(wd, d);
            const Hit h2 = cast2(wd, motions, d);
            if (h1.body >= 0) a1 += texture(h1.surface, h1.u, h1.v, h1.X1.norm() / spec.focal, tex_seed);
            if (h2.body >= 0) a2 += texture(h2.surface, h2.u, h2.v, h2.X1.norm() / spec.focal, tex_seed);
          }
        sc.img1(x, y) = static_cast<float>(a1 / (S * S));
        sc.img2(x, y) = static_cast<float>(a2 / (S * S));
      }
    return sc;
  }
  throw std::runtime_error("make_synthetic_scene: could not draw a valid scene for this seed");
}

std::vector<TrainingExample> scene_training_examples(const SyntheticScene& scene, int pixels, int R, int patch_size,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int W = scene.img1.width, H = scene.img1.height;
  std::uniform_int_distribution<int> ux(0, W - 1), uy(0, H - 1);
  std::vector<TrainingExample> out;
  const long long max_draws = 1000LL * std::max(1, pixels);
  for (long long draw = 0; static_cast<int>(out.size()) < 2 * pixels && draw < max_draws; ++draw) {
    const int x = ux(rng), y = uy(rng);
    if (!scene.noc(x, y)) continue;
    auto h = sample_training_pair(scene.img1, scene.img2, scene.gt, x, y, SearchAxis::horizontal, R, patch_size);
    auto v = sample_training_pair(scene.img1, scene.img2, scene.gt, x, y, SearchAxis::vertical, R, patch_size);
    if (!h || !v) continue;
    out.push_back(std::move(*h));
    out.push_back(std::move(*v));
  }
  return out;
}

}  // namespace oaflow
