#pragma once

#include <span>
#include <string>

#include "tcdp/losses.hpp"
#include "tcdp/metrics.hpp"

namespace tcdp {

// Report emitters with stable layouts. CSV floats use the shortest %.10g
// form; JSON documents are emitted by a deterministic serializer with keys in
// lexicographic order. Rerunning on equal inputs reproduces the bytes.

// Header: index,depth_rmse,depth_absrel,depth_pixels,absrel_excluded,
// align_scale,align_shift,normal_mean_deg,normal_median_deg,normal_pixels,
// followed by one acc_<threshold> column per accuracy threshold. All records
// must share one threshold list (the default list is used when empty).
std::string image_records_csv(std::span<const ImageRecord> records);

// Header: index,opw_depth,tc_rmse,opw_normal,tc_mean_deg,tc_abs_deg,
// depth_pixels,normal_pixels.
std::string pair_records_csv(std::span<const PairRecord> records);

std::string summary_json(const DatasetSummary& summary);
DatasetSummary summary_from_json_text(const std::string& text);

// Breakdown plus the configuration that produced it under a "config" key.
std::string breakdown_json(const LossBreakdown& breakdown, const LossConfig& cfg);

// Combined loss report: {"config": ..., "stage1": [breakdowns in frame
// order], "stage2": breakdown or null}. Pass stage2 = nullptr for sequences
// without flow supervision.
std::string loss_report_json(std::span<const LossBreakdown> stage1, const LossBreakdown* stage2,
                             const LossConfig& cfg);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace tcdp
