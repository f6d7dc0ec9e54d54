#include "tcdp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "tcdp/image_io.hpp"
#include "tcdp/numeric.hpp"

namespace tcdp {

namespace fs = std::filesystem;

namespace {

constexpr double kRayEps = 1e-9;

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double uniform(std::uint64_t& state, double lo, double hi) {
  return lo + unit_double(splitmix64(state)) * (hi - lo);
}

struct CapsuleHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;  // unit, world frame
  bool hit = false;
};

// Nearest forward intersection of a ray with a sphere, as an entry candidate.
void sphere_candidate(const Vec3& ro, const Vec3& rd, const Vec3& center, double r, double& best) {
  Vec3 oc = ro - center;
  double b = dot(rd, oc);
  double c = dot(oc, oc) - r * r;
  double h = b * b - c;
  if (h < 0.0) return;
  double t = -b - std::sqrt(h);
  if (t > kRayEps && t < best) best = t;
}

// Closest-hit ray/capsule test: the capsule is the union of the radius-r
// cylinder between pa and pb and the two end spheres; the earliest entry
// among those convex pieces is the surface hit. rd must be unit length.
CapsuleHit intersect_capsule(const Vec3& ro, const Vec3& rd, const Vec3& pa, const Vec3& pb,
                             double r) {
  CapsuleHit out;
  Vec3 ba = pb - pa;
  double baba = dot(ba, ba);
  double best = std::numeric_limits<double>::infinity();

  if (baba > 0.0) {
    Vec3 oa = ro - pa;
    double bard = dot(ba, rd);
    double baoa = dot(ba, oa);
    double a = baba - bard * bard;
    if (a > 1e-12 * baba) {  // ray not parallel to the axis
      double b = baba * dot(rd, oa) - baoa * bard;
      double c = baba * (dot(oa, oa) - r * r) - baoa * baoa;
      double h = b * b - a * c;
      if (h >= 0.0) {
        double t = (-b - std::sqrt(h)) / a;
        double y = baoa + t * bard;
        if (t > kRayEps && y >= 0.0 && y <= baba && t < best) best = t;
      }
    }
    sphere_candidate(ro, rd, pa, r, best);
    sphere_candidate(ro, rd, pb, r, best);
  } else {
    sphere_candidate(ro, rd, pa, r, best);
  }

  if (!std::isfinite(best)) return out;
  out.hit = true;
  out.t = best;
  Vec3 p = ro + rd * best;
  Vec3 axis_pt = pa;
  if (baba > 0.0) {
    double h = std::clamp(dot(p - pa, ba) / baba, 0.0, 1.0);
    axis_pt = pa + ba * h;
  }
  out.normal = normalized(p - axis_pt);
  return out;
}

// World->camera rotation with rows x_c, y_c, z_c (an orthonormal basis).
Quat quat_from_rows(const Vec3& xr, const Vec3& yr, const Vec3& zr) {
  // Shepperd's method on the row matrix.
  double m00 = xr.x, m01 = xr.y, m02 = xr.z;
  double m10 = yr.x, m11 = yr.y, m12 = yr.z;
  double m20 = zr.x, m21 = zr.y, m22 = zr.z;
  double trace = m00 + m11 + m22;
  Quat q;
  if (trace > 0.0) {
    double s = std::sqrt(trace + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (m21 - m12) / s;
    q.y = (m02 - m20) / s;
    q.z = (m10 - m01) / s;
  } else if (m00 > m11 && m00 > m22) {
    double s = std::sqrt(1.0 + m00 - m11 - m22) * 2.0;
    q.w = (m21 - m12) / s;
    q.x = 0.25 * s;
    q.y = (m01 + m10) / s;
    q.z = (m02 + m20) / s;
  } else if (m11 > m22) {
    double s = std::sqrt(1.0 + m11 - m00 - m22) * 2.0;
    q.w = (m02 - m20) / s;
    q.x = (m01 + m10) / s;
    q.y = 0.25 * s;
    q.z = (m12 + m21) / s;
  } else {
    double s = std::sqrt(1.0 + m22 - m00 - m11) * 2.0;
    q.w = (m10 - m01) / s;
    q.x = (m02 + m20) / s;
    q.y = (m12 + m21) / s;
    q.z = 0.25 * s;
  }
  return q.normalized_q();
}

// Rotation of `angle` about `axis` through `pivot`, as a rigid transform.
RigidTransform rotate_about(const Vec3& pivot, const Vec3& axis, double angle) {
  Quat q = Quat::from_axis_angle(axis, angle);
  return {q, pivot - q.rotate(pivot)};
}

std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, index, ext);
  return buf;
}

}  // namespace

void SceneSpec::validate() const {
  if (poses.empty()) throw std::invalid_argument("SceneSpec: no frames");
  if (cameras.size() != poses.size()) {
    throw std::invalid_argument("SceneSpec: camera count does not match frame count");
  }
  for (const FigurePose& p : poses) {
    if (p.capsule_poses.size() != capsules.size()) {
      throw std::invalid_argument("SceneSpec: pose size does not match capsule count");
    }
    for (const RigidTransform& t : p.capsule_poses) {
      const Quat& q = t.rotation;
      double n = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
      if (std::fabs(n - 1.0) > 1e-6) {
        throw std::invalid_argument("SceneSpec: pose rotation is not unit-normalized");
      }
    }
  }
  for (const Capsule& c : capsules) {
    if (!(c.radius > 0.0)) throw std::invalid_argument("SceneSpec: capsule radius must be > 0");
  }
  for (const CameraSpec& c : cameras) {
    if (c.width < 1 || c.height < 1 || !(c.fx > 0.0) || !(c.fy > 0.0)) {
      throw std::invalid_argument("SceneSpec: bad camera");
    }
  }
}

RenderResult raycast_frame(const SceneSpec& scene, int frame) {
  scene.validate();
  if (frame < 0 || frame >= scene.frame_count()) {
    throw std::invalid_argument("raycast_frame: frame out of range");
  }
  const CameraSpec& cam = scene.cameras[frame];
  const FigurePose& pose = scene.poses[frame];

  std::size_t n = scene.capsules.size();
  std::vector<Vec3> wa(n), wb(n);
  for (std::size_t i = 0; i < n; ++i) {
    wa[i] = pose.capsule_poses[i].apply(scene.capsules[i].a);
    wb[i] = pose.capsule_poses[i].apply(scene.capsules[i].b);
  }

  RigidTransform cam_to_world = cam.world_to_camera.inverse();
  Vec3 ro = cam_to_world.apply({0.0, 0.0, 0.0});

  RenderResult out;
  out.depth = ScalarGrid(cam.width, cam.height, 0.0f, false);
  out.normal = VectorGrid(cam.width, cam.height, 3, 0.0f, false);
  out.mask = ScalarGrid(cam.width, cam.height, 0.0f, true);
  out.hit_capsule.assign(static_cast<std::size_t>(cam.width) * cam.height, -1);
  out.hit_world.assign(static_cast<std::size_t>(cam.width) * cam.height, Vec3{});

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec3 dir_cam = normalized({(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0});
      Vec3 rd = cam_to_world.apply_vector(dir_cam);
      double best_t = std::numeric_limits<double>::infinity();
      int best_i = -1;
      Vec3 best_n;
      for (std::size_t i = 0; i < n; ++i) {
        CapsuleHit h = intersect_capsule(ro, rd, wa[i], wb[i], scene.capsules[i].radius);
        if (h.hit && h.t < best_t) {
          best_t = h.t;
          best_i = static_cast<int>(i);
          best_n = h.normal;
        }
      }
      if (best_i < 0) continue;
      Vec3 p_world = ro + rd * best_t;
      Vec3 p_cam = cam.world_to_camera.apply(p_world);
      Vec3 n_cam = cam.world_to_camera.apply_vector(best_n);
      out.depth.set(x, y, static_cast<float>(p_cam.z), true);
      for (int c = 0; c < 3; ++c) {
        out.normal.at(x, y, c) = static_cast<float>(c == 0 ? n_cam.x : c == 1 ? n_cam.y : n_cam.z);
      }
      out.normal.set_valid(x, y, true);
      out.mask.at(x, y) = 1.0f;
      std::size_t px = out.depth.idx(x, y);
      out.hit_capsule[px] = best_i;
      out.hit_world[px] = p_world;
    }
  }
  return out;
}

namespace {

// Rendered depth range under the bilinear footprint of (x, y), taken over the
// valid taps with nonzero weight. A point estimate is meaningless where the
// footprint straddles a silhouette or an interior depth step, so the
// visibility test below asks whether the transported depth is consistent with
// any surface in this range. False when no rendered surface lies underneath.
bool footprint_depth_range(const ScalarGrid& depth, double x, double y, double* lo, double* hi) {
  if (!(x >= 0.0) || !(y >= 0.0) || !(x <= depth.width() - 1.0) || !(y <= depth.height() - 1.0)) {
    return false;
  }
  int x0 = std::min(static_cast<int>(std::floor(x)), depth.width() - 1);
  int y0 = std::min(static_cast<int>(std::floor(y)), depth.height() - 1);
  int x1 = std::min(x0 + 1, depth.width() - 1);
  int y1 = std::min(y0 + 1, depth.height() - 1);
  double fx = x - x0, fy = y - y0;
  const int xs[4] = {x0, x1, x0, x1};
  const int ys[4] = {y0, y0, y1, y1};
  const double ws[4] = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  bool any = false;
  for (int i = 0; i < 4; ++i) {
    if (ws[i] == 0.0 || !depth.valid_at(xs[i], ys[i])) continue;
    double d = depth.at(xs[i], ys[i]);
    *lo = any ? std::min(*lo, d) : d;
    *hi = any ? std::max(*hi, d) : d;
    any = true;
  }
  return any;
}

// One transport direction: move frame `src`'s surface points through the
// per-capsule motion into frame `dst`, reproject, and depth-test against
// dst's render.
void transport_direction(const SceneSpec& scene, int src, int dst, const RenderResult& src_render,
                         const RenderResult& dst_render, double occlusion_tol, VectorGrid& flow,
                         ScalarGrid& occlusion) {
  const CameraSpec& dst_cam = scene.cameras[dst];
  std::size_t n = scene.capsules.size();
  std::vector<RigidTransform> motion(n);
  for (std::size_t i = 0; i < n; ++i) {
    motion[i] = scene.poses[dst].capsule_poses[i].compose(scene.poses[src].capsule_poses[i].inverse());
  }

  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      std::size_t px = src_render.depth.idx(x, y);
      int cap = src_render.hit_capsule[px];
      if (cap < 0) continue;  // background keeps its valid zero flow
      Vec3 moved = motion[cap].apply(src_render.hit_world[px]);
      Vec3 q_cam = dst_cam.world_to_camera.apply(moved);
      bool visible = q_cam.z > kRayEps;
      double u = 0.0, v = 0.0;
      if (visible) {
        u = dst_cam.fx * q_cam.x / q_cam.z + dst_cam.cx;
        v = dst_cam.fy * q_cam.y / q_cam.z + dst_cam.cy;
        double lo = 0.0, hi = 0.0;
        visible = footprint_depth_range(dst_render.depth, u, v, &lo, &hi) &&
                  q_cam.z >= lo - occlusion_tol && q_cam.z <= hi + occlusion_tol;
      }
      if (visible) {
        flow.at(x, y, 0) = static_cast<float>(u - x);
        flow.at(x, y, 1) = static_cast<float>(v - y);
      } else {
        occlusion.at(x, y) = 1.0f;
        flow.set_valid(x, y, false);
      }
    }
  }
}

}  // namespace

FlowResult analytic_flow(const SceneSpec& scene, int frame, double occlusion_tol) {
  scene.validate();
  if (frame < 0 || frame + 1 >= scene.frame_count()) {
    throw std::invalid_argument("analytic_flow: frame pair out of range");
  }
  if (!(occlusion_tol > 0.0)) throw std::invalid_argument("analytic_flow: bad occlusion tolerance");

  RenderResult rk = raycast_frame(scene, frame);
  RenderResult rk1 = raycast_frame(scene, frame + 1);
  const CameraSpec& ck = scene.cameras[frame];
  const CameraSpec& ck1 = scene.cameras[frame + 1];

  FlowResult out;
  out.fwd = VectorGrid(ck.width, ck.height, 2, 0.0f, true);
  out.bwd = VectorGrid(ck1.width, ck1.height, 2, 0.0f, true);
  out.occlusion_fwd = ScalarGrid(ck.width, ck.height, 0.0f, true);
  out.occlusion_bwd = ScalarGrid(ck1.width, ck1.height, 0.0f, true);

  transport_direction(scene, frame, frame + 1, rk, rk1, occlusion_tol, out.fwd, out.occlusion_fwd);
  transport_direction(scene, frame + 1, frame, rk1, rk, occlusion_tol, out.bwd, out.occlusion_bwd);
  return out;
}

SceneSpec make_walker(std::uint64_t seed, int frame_count, const WalkerParams& params) {
  if (frame_count < 1) throw std::invalid_argument("make_walker: frame_count must be >= 1");
  if (params.width < 8 || params.height < 8) {
    throw std::invalid_argument("make_walker: image too small");
  }
  if (!(params.motion_scale >= 0.0)) throw std::invalid_argument("make_walker: bad motion_scale");

  SceneSpec scene;
  scene.rng_seed = seed;

  // Rest skeleton, meters, y down. Indices: 0 pelvis, 1 chest, 2 head,
  // 3/4 left arm, 5/6 right arm, 7/8 left leg, 9/10 right leg.
  const Vec3 shoulder_l{-0.085, -0.155, 0.0}, shoulder_r{0.085, -0.155, 0.0};
  const Vec3 elbow_l{-0.092, -0.050, 0.0}, elbow_r{0.092, -0.050, 0.0};
  const Vec3 wrist_l{-0.092, 0.050, 0.0}, wrist_r{0.092, 0.050, 0.0};
  const Vec3 hip_l{-0.045, 0.020, 0.0}, hip_r{0.045, 0.020, 0.0};
  const Vec3 knee_l{-0.050, 0.140, 0.0}, knee_r{0.050, 0.140, 0.0};
  const Vec3 ankle_l{-0.050, 0.260, 0.0}, ankle_r{0.050, 0.260, 0.0};

  scene.capsules = {
      {{0.0, 0.020, 0.0}, {0.0, -0.060, 0.0}, 0.055},   // pelvis
      {{0.0, -0.070, 0.0}, {0.0, -0.170, 0.0}, 0.060},  // chest
      {{0.0, -0.210, 0.0}, {0.0, -0.258, 0.0}, 0.042},  // head
      {shoulder_l, elbow_l, 0.022},                     // left upper arm
      {elbow_l, wrist_l, 0.019},                        // left forearm
      {shoulder_r, elbow_r, 0.022},                     // right upper arm
      {elbow_r, wrist_r, 0.019},                        // right forearm
      {hip_l, knee_l, 0.032},                           // left thigh
      {knee_l, ankle_l, 0.026},                         // left shin
      {hip_r, knee_r, 0.032},                           // right thigh
      {knee_r, ankle_r, 0.026},                         // right shin
  };

  std::uint64_t state = seed * 0x2545F4914F6CDD1Dull + 0x123456789ABCDEFull;
  double focal_rel = uniform(state, params.focal_min_rel, params.focal_max_rel);
  double orbit0 = uniform(state, 0.0, 2.0 * kPi);
  double gait0 = uniform(state, 0.0, 2.0 * kPi);

  double swing_deg = std::min(params.joint_amplitude_deg * params.motion_scale, 45.0);
  double swing = rad_from_deg(swing_deg);
  double orbit_rate = rad_from_deg(std::min(params.orbit_deg_per_frame * params.motion_scale, 2.0));
  double bob = params.bob_amplitude_m * params.motion_scale;

  const Vec3 target{0.0, -0.075, 0.0};  // mid-torso, the camera aim point
  double fx = focal_rel * params.width;
  double distance = 0.9 * focal_rel * std::max(1.0, static_cast<double>(params.width) / params.height);
  const Vec3 axis_x{1.0, 0.0, 0.0};

  for (int t = 0; t < frame_count; ++t) {
    double phase = gait0 + 2.0 * kPi * t / params.gait_period_frames;
    double leg_l = swing * std::sin(phase);
    double leg_r = swing * std::sin(phase + kPi);
    double knee_bend_l = 0.6 * swing * std::sin(phase + 0.9);
    double knee_bend_r = 0.6 * swing * std::sin(phase + kPi + 0.9);
    double arm_l = 0.8 * swing * std::sin(phase + kPi);  // arms counter the legs
    double arm_r = 0.8 * swing * std::sin(phase);
    double elbow_swing_l = 0.5 * swing * std::sin(phase + kPi + 0.6);
    double elbow_swing_r = 0.5 * swing * std::sin(phase + 0.6);

    RigidTransform root{Quat::identity(),
                        {0.0, bob * std::sin(2.0 * phase), 0.3 * bob * std::cos(phase)}};

    FigurePose pose;
    pose.capsule_poses.resize(scene.capsules.size());
    pose.capsule_poses[0] = root;
    pose.capsule_poses[1] = root;
    pose.capsule_poses[2] = root;
    RigidTransform ua_l = root.compose(rotate_about(shoulder_l, axis_x, arm_l));
    RigidTransform ua_r = root.compose(rotate_about(shoulder_r, axis_x, arm_r));
    pose.capsule_poses[3] = ua_l;
    pose.capsule_poses[4] = ua_l.compose(rotate_about(elbow_l, axis_x, elbow_swing_l));
    pose.capsule_poses[5] = ua_r;
    pose.capsule_poses[6] = ua_r.compose(rotate_about(elbow_r, axis_x, elbow_swing_r));
    RigidTransform th_l = root.compose(rotate_about(hip_l, axis_x, leg_l));
    RigidTransform th_r = root.compose(rotate_about(hip_r, axis_x, leg_r));
    pose.capsule_poses[7] = th_l;
    pose.capsule_poses[8] = th_l.compose(rotate_about(knee_l, axis_x, knee_bend_l));
    pose.capsule_poses[9] = th_r;
    pose.capsule_poses[10] = th_r.compose(rotate_about(knee_r, axis_x, knee_bend_r));
    scene.poses.push_back(std::move(pose));

    double phi = orbit0 + orbit_rate * t;
    Vec3 cam_pos = target + Vec3{distance * std::sin(phi), 0.0, -distance * std::cos(phi)};
    Vec3 fwd = normalized(target - cam_pos);
    Vec3 right = normalized(cross({0.0, 1.0, 0.0}, fwd));
    Vec3 down = cross(fwd, right);

    CameraSpec cam;
    cam.width = params.width;
    cam.height = params.height;
    cam.fx = fx;
    cam.fy = fx;
    cam.cx = (params.width - 1) / 2.0;
    cam.cy = (params.height - 1) / 2.0;
    cam.world_to_camera.rotation = quat_from_rows(right, down, fwd);
    cam.world_to_camera.translation = -cam.world_to_camera.rotation.rotate(cam_pos);
    scene.cameras.push_back(cam);
  }
  return scene;
}

SequenceManifest generate_sequence(const SceneSpec& scene, const std::string& out_dir) {
  scene.validate();
  fs::create_directories(out_dir);

  SequenceManifest m;
  m.frame_count = scene.frame_count();
  m.width = scene.cameras.front().width;
  m.height = scene.cameras.front().height;
  m.base_dir = out_dir;
  for (const CameraSpec& c : scene.cameras) {
    if (c.width != m.width || c.height != m.height) {
      throw std::invalid_argument("generate_sequence: cameras disagree on image size");
    }
  }

  std::vector<RenderResult> renders(scene.frame_count());
  for (int k = 0; k < scene.frame_count(); ++k) {
    renders[k] = raycast_frame(scene, k);
    FrameEntry e;
    e.depth = frame_name("depth", k, "pfm");
    e.normal = frame_name("normal", k, "png");
    e.mask = frame_name("mask", k, "png");
    e.camera = {scene.cameras[k].fx, scene.cameras[k].fy, scene.cameras[k].cx,
                scene.cameras[k].cy};
    save_pfm(renders[k].depth, m.resolve(e.depth));
    save_normal_png16(renders[k].normal, m.resolve(e.normal));
    save_mask_png16(renders[k].mask, m.resolve(e.mask));
    m.frames.push_back(std::move(e));
  }

  for (int k = 0; k + 1 < scene.frame_count(); ++k) {
    FlowResult f = analytic_flow(scene, k);
    std::string fwd_name = frame_name("flow_fwd", k, "flo");
    std::string bwd_name = frame_name("flow_bwd", k, "flo");
    save_flo(f.fwd, m.resolve(fwd_name));
    save_flo(f.bwd, m.resolve(bwd_name));
    m.flows_fwd.push_back(fwd_name);
    m.flows_bwd.push_back(bwd_name);
  }

  m.save((fs::path(out_dir) / "manifest.json").string());
  return m;
}

}  // namespace tcdp
