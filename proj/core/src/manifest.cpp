#include "tcdp/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tcdp/image_io.hpp"

namespace tcdp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string SequenceManifest::resolve(const std::string& relative) const {
  if (relative.empty()) return relative;
  fs::path p(relative);
  if (p.is_absolute() || base_dir.empty()) return relative;
  return (fs::path(base_dir) / p).string();
}

namespace {

CameraIntrinsics camera_from_json(const json& j) {
  CameraIntrinsics c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  return c;
}

json camera_to_json(const CameraIntrinsics& c) {
  return json{{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}};
}

void check_file(const SequenceManifest& m, const std::string& rel, const std::string& role) {
  std::string full = m.resolve(rel);
  if (!fs::exists(full)) {
    throw std::runtime_error("manifest references missing " + role + " file: " + full);
  }
  ImageDims d = peek_dims(full);
  if (d.width != m.width || d.height != m.height) {
    throw std::runtime_error("manifest dimension mismatch for " + full + ": expected " +
                             std::to_string(m.width) + "x" + std::to_string(m.height) + ", got " +
                             std::to_string(d.width) + "x" + std::to_string(d.height));
  }
}

}  // namespace

SequenceManifest SequenceManifest::load(const std::string& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + path + " is not valid JSON: " + e.what());
  }

  SequenceManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  try {
    m.frame_count = j.at("frame_count").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    for (const json& fj : j.at("frames")) {
      FrameEntry e;
      if (fj.contains("rgb") && !fj.at("rgb").is_null()) e.rgb = fj.at("rgb").get<std::string>();
      e.depth = fj.at("depth").get<std::string>();
      e.normal = fj.at("normal").get<std::string>();
      e.mask = fj.at("mask").get<std::string>();
      e.camera = camera_from_json(fj.at("camera"));
      m.frames.push_back(std::move(e));
    }
    if (j.contains("flows_fwd")) m.flows_fwd = j.at("flows_fwd").get<std::vector<std::string>>();
    if (j.contains("flows_bwd")) m.flows_bwd = j.at("flows_bwd").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + path + " has a bad schema: " + e.what());
  }

  if (m.frame_count < 1) throw std::runtime_error("manifest " + path + ": frame_count < 1");
  if (static_cast<int>(m.frames.size()) != m.frame_count) {
    throw std::runtime_error("manifest " + path + ": frames array length does not match frame_count");
  }
  if (!m.flows_fwd.empty() || !m.flows_bwd.empty()) {
    if (static_cast<int>(m.flows_fwd.size()) != m.frame_count - 1 ||
        static_cast<int>(m.flows_bwd.size()) != m.frame_count - 1) {
      throw std::runtime_error("manifest " + path + ": flow lists must have frame_count-1 entries");
    }
  }
  if (m.width < 1 || m.height < 1) throw std::runtime_error("manifest " + path + ": bad dimensions");

  if (validate) {
    for (const FrameEntry& e : m.frames) {
      check_file(m, e.depth, "depth");
      check_file(m, e.normal, "normal");
      check_file(m, e.mask, "mask");
    }
    for (const std::string& p : m.flows_fwd) check_file(m, p, "forward flow");
    for (const std::string& p : m.flows_bwd) check_file(m, p, "backward flow");
  }
  return m;
}

void SequenceManifest::save(const std::string& path) const {
  json j;
  j["frame_count"] = frame_count;
  j["width"] = width;
  j["height"] = height;
  j["frames"] = json::array();
  for (const FrameEntry& e : frames) {
    json fj;
    fj["rgb"] = e.rgb.empty() ? json(nullptr) : json(e.rgb);
    fj["depth"] = e.depth;
    fj["normal"] = e.normal;
    fj["mask"] = e.mask;
    fj["camera"] = camera_to_json(e.camera);
    j["frames"].push_back(std::move(fj));
  }
  j["flows_fwd"] = flows_fwd;
  j["flows_bwd"] = flows_bwd;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

}  // namespace tcdp
