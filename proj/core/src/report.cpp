#include "tcdp/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tcdp {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string acc_column_name(double threshold) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "acc_%g", threshold);
  return buf;
}

template <typename T>
T require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::runtime_error(std::string("summary JSON: missing key ") + key);
  return it->get<T>();
}

}  // namespace

std::string image_records_csv(std::span<const ImageRecord> records) {
  std::span<const double> thresholds{kDefaultAccThresholds};
  if (!records.empty()) thresholds = records.front().normal.thresholds_deg;
  for (const ImageRecord& r : records) {
    if (r.normal.thresholds_deg.size() != thresholds.size()) {
      throw std::invalid_argument("image_records_csv: records disagree on thresholds");
    }
  }

  std::string out =
      "index,depth_rmse,depth_absrel,depth_pixels,absrel_excluded,align_scale,align_shift,"
      "normal_mean_deg,normal_median_deg,normal_pixels";
  for (double t : thresholds) out += "," + acc_column_name(t);
  out += "\n";

  for (const ImageRecord& r : records) {
    out += std::to_string(r.index);
    out += "," + fmt(r.depth.rmse) + "," + fmt(r.depth.absrel);
    out += "," + std::to_string(r.depth.pixel_count) + "," + std::to_string(r.depth.absrel_excluded);
    out += "," + fmt(r.depth.alignment.scale) + "," + fmt(r.depth.alignment.shift);
    out += "," + fmt(r.normal.mean_deg) + "," + fmt(r.normal.median_deg);
    out += "," + std::to_string(r.normal.pixel_count);
    for (double a : r.normal.acc) out += "," + fmt(a);
    out += "\n";
  }
  return out;
}

std::string pair_records_csv(std::span<const PairRecord> records) {
  std::string out =
      "index,opw_depth,tc_rmse,opw_normal,tc_mean_deg,tc_abs_deg,depth_pixels,normal_pixels\n";
  for (const PairRecord& r : records) {
    out += std::to_string(r.index);
    out += "," + fmt(r.opw_depth) + "," + fmt(r.tc_rmse) + "," + fmt(r.opw_normal);
    out += "," + fmt(r.tc_mean_deg) + "," + fmt(r.tc_abs_deg);
    out += "," + std::to_string(r.depth_pixels) + "," + std::to_string(r.normal_pixels);
    out += "\n";
  }
  return out;
}

std::string summary_json(const DatasetSummary& s) {
  json j;
  j["image_count"] = s.image_count;
  j["pair_count"] = s.pair_count;
  j["pixel_pooled"] = s.pixel_pooled;
  j["depth_rmse"] = s.depth_rmse;
  j["depth_absrel"] = s.depth_absrel;
  j["normal_mean_deg"] = s.normal_mean_deg;
  j["normal_median_deg"] = s.normal_median_deg;
  j["thresholds_deg"] = s.thresholds_deg;
  j["normal_acc"] = s.normal_acc;
  j["opw_depth"] = s.opw_depth;
  j["tc_rmse"] = s.tc_rmse;
  j["opw_normal"] = s.opw_normal;
  j["tc_mean_deg"] = s.tc_mean_deg;
  j["tc_abs_deg"] = s.tc_abs_deg;
  j["depth_pixel_count"] = s.depth_pixel_count;
  j["normal_pixel_count"] = s.normal_pixel_count;
  j["pair_depth_pixel_count"] = s.pair_depth_pixel_count;
  j["pair_normal_pixel_count"] = s.pair_normal_pixel_count;
  return j.dump(2) + "\n";
}

DatasetSummary summary_from_json_text(const std::string& text) {
  json j = json::parse(text);
  DatasetSummary s;
  s.image_count = require<long long>(j, "image_count");
  s.pair_count = require<long long>(j, "pair_count");
  s.pixel_pooled = require<bool>(j, "pixel_pooled");
  s.depth_rmse = require<double>(j, "depth_rmse");
  s.depth_absrel = require<double>(j, "depth_absrel");
  s.normal_mean_deg = require<double>(j, "normal_mean_deg");
  s.normal_median_deg = require<double>(j, "normal_median_deg");
  s.thresholds_deg = require<std::vector<double>>(j, "thresholds_deg");
  s.normal_acc = require<std::vector<double>>(j, "normal_acc");
  s.opw_depth = require<double>(j, "opw_depth");
  s.tc_rmse = require<double>(j, "tc_rmse");
  s.opw_normal = require<double>(j, "opw_normal");
  s.tc_mean_deg = require<double>(j, "tc_mean_deg");
  s.tc_abs_deg = require<double>(j, "tc_abs_deg");
  s.depth_pixel_count = require<long long>(j, "depth_pixel_count");
  s.normal_pixel_count = require<long long>(j, "normal_pixel_count");
  s.pair_depth_pixel_count = require<long long>(j, "pair_depth_pixel_count");
  s.pair_normal_pixel_count = require<long long>(j, "pair_normal_pixel_count");
  return s;
}

namespace {

json breakdown_body(const LossBreakdown& b) {
  json j;
  j["components"]["depth"] = b.depth;
  j["components"]["depth_grad"] = b.depth_grad;
  j["components"]["normal_base"] = b.normal_base;
  j["components"]["normal_grad"] = b.normal_grad;
  j["components"]["normal_lap"] = b.normal_lap;
  j["components"]["seg"] = b.seg;
  j["components"]["temp_depth"] = b.temp_depth;
  j["components"]["temp_normal"] = b.temp_normal;
  j["total"] = b.total;
  j["pixels"]["depth"] = b.depth_pixels;
  j["pixels"]["normal"] = b.normal_pixels;
  j["pixels"]["normal_grad"] = b.normal_grad_pixels;
  j["pixels"]["normal_lap"] = b.normal_lap_pixels;
  j["pixels"]["seg"] = b.seg_pixels;
  j["pixels"]["temp_depth"] = b.temp_depth_pixels;
  j["pixels"]["temp_normal"] = b.temp_normal_pixels;
  j["flags"]["degenerate_alignment"] = b.degenerate_alignment;
  j["flags"]["negative_scale"] = b.negative_scale;
  j["flags"]["degenerate_gt_depth"] = b.degenerate_gt_depth;
  j["flags"]["empty_temporal_mask"] = b.empty_temporal_mask;
  return j;
}

}  // namespace

std::string breakdown_json(const LossBreakdown& b, const LossConfig& cfg) {
  json j = breakdown_body(b);
  j["config"] = json::parse(cfg.to_json_text());
  return j.dump(2) + "\n";
}

std::string loss_report_json(std::span<const LossBreakdown> stage1, const LossBreakdown* stage2,
                             const LossConfig& cfg) {
  json j;
  j["config"] = json::parse(cfg.to_json_text());
  j["stage1"] = json::array();
  for (const LossBreakdown& b : stage1) j["stage1"].push_back(breakdown_body(b));
  j["stage2"] = stage2 ? breakdown_body(*stage2) : json(nullptr);
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace tcdp
