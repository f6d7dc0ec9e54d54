#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcdp/geometry.hpp"
#include "tcdp/grid.hpp"
#include "tcdp/manifest.hpp"

namespace tcdp {

// Capsule in its rest frame: the segment a-b swept by a sphere of the given
// radius. a == b degenerates to a sphere.
struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0.0;
};

// World pose of every capsule at one frame.
struct FigurePose {
  std::vector<RigidTransform> capsule_poses;
};

// Pinhole camera: x_cam = world_to_camera(x_world); pixel = (fx X/Z + cx,
// fy Y/Z + cy) with +z forward, +x right, +y down (matching grid axes).
struct CameraSpec {
  int width = 0;
  int height = 0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  RigidTransform world_to_camera;
};

struct SceneSpec {
  std::vector<Capsule> capsules;
  std::vector<FigurePose> poses;     // one per frame
  std::vector<CameraSpec> cameras;   // one per frame
  std::uint64_t rng_seed = 0;

  int frame_count() const { return static_cast<int>(poses.size()); }
  void validate() const;  // counts agree, >= 1 frame, normalized poses
};

// Closest-hit ray cast of one frame. depth holds camera-space Z (not ray
// length); normals are unit outward surface normals rotated into the camera
// frame (they face the camera: dot(normal, view ray) <= 0 on every hit);
// mask is 1 on hits and 0 elsewhere; depth/normal validity equals the mask.
struct RenderResult {
  ScalarGrid depth;
  VectorGrid normal;
  ScalarGrid mask;
  std::vector<int> hit_capsule;  // -1 where no hit
  std::vector<Vec3> hit_world;   // world-space surface point, valid on hits
};

RenderResult raycast_frame(const SceneSpec& scene, int frame);

// Exact correspondence flow between frames k and k+1 via per-capsule rigid
// transport of the ray-cast surface points plus reprojection. A transported
// point that is not visible in the other frame (its camera depth misses the
// other frame's rendered depth by more than occlusion_tol meters, or it
// leaves the image entirely) is marked occluded and its flow is invalid. The
// depth test accepts a point whose depth falls within the range of rendered
// depths under its bilinear footprint, padded by occlusion_tol, so grazing a
// silhouette or an interior depth step does not read as an occlusion.
// Background pixels carry a valid zero flow, keeping the grids densely
// sampleable for consistency checks. occlusion_fwd/bwd are fully-valid 0/1
// grids flagging occlusions among the respective frame's hit pixels.
struct FlowResult {
  VectorGrid fwd;  // frame k   -> frame k+1, defined on frame k's grid
  VectorGrid bwd;  // frame k+1 -> frame k,   defined on frame k+1's grid
  ScalarGrid occlusion_fwd;
  ScalarGrid occlusion_bwd;
};

FlowResult analytic_flow(const SceneSpec& scene, int frame, double occlusion_tol = 1e-4);

// Articulated figure: pelvis, chest, head and four two-segment limbs, eleven
// capsules total, walking in place with sinusoidal joint swings while the
// camera orbits slowly, always aimed at the figure root. Focal length and
// gait phases are sampled from the seed. Joint swing amplitudes stay small by
// default so frame-to-frame surface motion sits near the interpolation noise
// floor; motion_scale inflates them (swings clamp at 45 degrees).
struct WalkerParams {
  int width = 128;
  int height = 128;
  double motion_scale = 1.0;
  double focal_min_rel = 0.8;   // fx as a multiple of width
  double focal_max_rel = 1.5;
  double orbit_deg_per_frame = 0.00125;
  double joint_amplitude_deg = 0.0125;
  double bob_amplitude_m = 0.00005;
  double gait_period_frames = 16.0;
};

SceneSpec make_walker(std::uint64_t seed, int frame_count, const WalkerParams& params = {});

// Renders every frame and writes depth_%04d.pfm, normal_%04d.png,
// mask_%04d.png, flow_fwd_%04d.flo, flow_bwd_%04d.flo and manifest.json into
// out_dir (created if missing). Outputs are byte-identical for equal inputs.
SequenceManifest generate_sequence(const SceneSpec& scene, const std::string& out_dir);

}  // namespace tcdp
