#pragma once

#include <string>
#include <vector>

namespace tcdp {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Per-frame file entries, paths relative to the manifest's directory.
// rgb is optional (empty when absent) and never interpreted by this library.
struct FrameEntry {
  std::string rgb;
  std::string depth;
  std::string normal;
  std::string mask;
  CameraIntrinsics camera;
};

struct SequenceManifest {
  int frame_count = 0;
  int width = 0;
  int height = 0;
  std::vector<FrameEntry> frames;
  std::vector<std::string> flows_fwd;  // flows_fwd[k] maps frame k to k+1
  std::vector<std::string> flows_bwd;  // flows_bwd[k] maps frame k+1 to k
  std::string base_dir;  // set on load; not serialized

  bool has_flows() const { return !flows_fwd.empty(); }
  std::string resolve(const std::string& relative) const;

  // Parses and, when validate is set, checks that every referenced file
  // exists and that all referenced images share the manifest's dimensions
  // (header peek only, no payload decode).
  static SequenceManifest load(const std::string& path, bool validate = true);
  void save(const std::string& path) const;
};

}  // namespace tcdp
