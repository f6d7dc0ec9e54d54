#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "tcdp/image_io.hpp"
#include "tcdp/manifest.hpp"
#include "test_util.hpp"

#include <nlohmann/json.hpp>

using namespace tcdp;
using nlohmann::json;
using testutil::CliResult;
using testutil::run_cli;
using testutil::same_bytes;
using testutil::same_tree;
using testutil::slurp;
using testutil::TempDir;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

// Writes a manifest whose depth is an affine remap of `src` and whose other
// planes point back into the source directory.
void write_affine_pred(const std::string& src_manifest, const std::string& out_dir, float scale,
                       float shift) {
  SequenceManifest m = SequenceManifest::load(src_manifest);
  std::filesystem::create_directories(out_dir);
  std::string src_dir = m.base_dir;
  SequenceManifest out = m;
  out.flows_fwd.clear();
  out.flows_bwd.clear();
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    ScalarGrid d = load_pfm_scalar(m.resolve(m.frames[i].depth));
    for (int y = 0; y < d.height(); ++y) {
      for (int x = 0; x < d.width(); ++x) {
        if (d.valid_at(x, y)) d.at(x, y) = scale * d.at(x, y) + shift;
      }
    }
    save_pfm(d, out_dir + "/" + m.frames[i].depth);
    out.frames[i].normal = "../src/" + m.frames[i].normal;
    out.frames[i].mask = "../src/" + m.frames[i].mask;
  }
  out.save(out_dir + "/manifest.json");
}

}  // namespace

TEST_CASE("gen-synth renders deterministic sequences") {
  TempDir tmp("tcdp_cli_gen");
  CliResult r = run_cli("gen-synth --seed 3 --frames 3 --size 32 --out " + tmp.str("a"), tmp.str());
  REQUIRE(r.exit_code == 0);
  // The tool prints the manifest path it wrote.
  std::string path = lines_of(r.output).at(0);
  CHECK(std::filesystem::exists(path));

  CliResult r2 =
      run_cli("gen-synth --seed 3 --frames 3 --size 32 --out " + tmp.str("b"), tmp.str());
  REQUIRE(r2.exit_code == 0);
  CHECK(same_tree(tmp.str("a"), tmp.str("b")));

  SUBCASE("rectangular override") {
    CliResult rw = run_cli(
        "gen-synth --seed 1 --frames 1 --width 40 --height 24 --out " + tmp.str("c"), tmp.str());
    REQUIRE(rw.exit_code == 0);
    SequenceManifest m = SequenceManifest::load(tmp.str("c/manifest.json"));
    CHECK(m.width == 40);
    CHECK(m.height == 24);
  }
  SUBCASE("argument validation") {
    CHECK(run_cli("gen-synth --frames 0 --out " + tmp.str("x"), tmp.str()).exit_code != 0);
    CHECK(run_cli("gen-synth --size 4 --out " + tmp.str("x"), tmp.str()).exit_code != 0);
    CHECK(run_cli("gen-synth", tmp.str()).exit_code != 0);  // --out is required
    CHECK(run_cli("no-such-command", tmp.str()).exit_code != 0);
  }
}

TEST_CASE("eval-images is exact on ground truth and byte-stable") {
  TempDir tmp("tcdp_cli_ei");
  REQUIRE(run_cli("gen-synth --seed 5 --frames 3 --size 32 --out " + tmp.str("src"), tmp.str())
              .exit_code == 0);
  std::string mani = tmp.str("src/manifest.json");

  CliResult r = run_cli("eval-images --pred " + mani + " --gt " + mani + " --out-json " +
                            tmp.str("s.json") + " --out-csv " + tmp.str("s.csv"),
                        tmp.str());
  REQUIRE(r.exit_code == 0);

  json s = json::parse(slurp(tmp.str("s.json")));
  CHECK(s["image_count"].get<long long>() == 3);
  CHECK(s["pair_count"].get<long long>() == 0);
  CHECK(s["depth_rmse"].get<double>() == 0.0);
  CHECK(s["depth_absrel"].get<double>() == 0.0);
  CHECK(s["normal_mean_deg"].get<double>() == 0.0);
  CHECK(s["normal_median_deg"].get<double>() == 0.0);
  REQUIRE(s["normal_acc"].size() == 3);
  for (const auto& a : s["normal_acc"]) CHECK(a.get<double>() == 1.0);
  CHECK(s["depth_pixel_count"].get<long long>() > 0);

  auto csv = lines_of(slurp(tmp.str("s.csv")));
  REQUIRE(csv.size() == 4);
  CHECK(csv[0].rfind("index,depth_rmse,depth_absrel,", 0) == 0);

  SUBCASE("reruns are byte-identical") {
    REQUIRE(run_cli("eval-images --pred " + mani + " --gt " + mani + " --out-json " +
                        tmp.str("s2.json") + " --out-csv " + tmp.str("s2.csv"),
                    tmp.str())
                .exit_code == 0);
    CHECK(same_bytes(tmp.str("s.json"), tmp.str("s2.json")));
    CHECK(same_bytes(tmp.str("s.csv"), tmp.str("s2.csv")));
  }
  SUBCASE("custom thresholds are echoed") {
    REQUIRE(run_cli("eval-images --pred " + mani + " --gt " + mani +
                        " --thresholds 5,10,20,30 --out-json " + tmp.str("t.json"),
                    tmp.str())
                .exit_code == 0);
    json t = json::parse(slurp(tmp.str("t.json")));
    CHECK(t["thresholds_deg"] == json({5.0, 10.0, 20.0, 30.0}));
    CHECK(t["normal_acc"].size() == 4);
  }
  SUBCASE("decreasing thresholds are rejected") {
    CHECK(run_cli("eval-images --pred " + mani + " --gt " + mani + " --thresholds 10,5",
                  tmp.str())
              .exit_code != 0);
  }
  SUBCASE("missing manifest is a parse error") {
    CHECK(run_cli("eval-images --pred /nonexistent.json --gt " + mani, tmp.str()).exit_code != 0);
  }
}

TEST_CASE("eval-images undoes an affine depth remap") {
  TempDir tmp("tcdp_cli_affine");
  REQUIRE(run_cli("gen-synth --seed 6 --frames 2 --size 32 --out " + tmp.str("src"), tmp.str())
              .exit_code == 0);
  write_affine_pred(tmp.str("src/manifest.json"), tmp.str("pred"), 2.0f, 0.3f);

  CliResult r = run_cli("eval-images --pred " + tmp.str("pred/manifest.json") + " --gt " +
                            tmp.str("src/manifest.json") + " --out-json " + tmp.str("a.json") +
                            " --out-csv " + tmp.str("a.csv"),
                        tmp.str());
  REQUIRE(r.exit_code == 0);
  json s = json::parse(slurp(tmp.str("a.json")));
  CHECK(s["depth_rmse"].get<double>() < 1e-5);
  CHECK(s["depth_absrel"].get<double>() < 1e-5);

  // Per-image rows carry the fitted transform: depth = 2 gt + 0.3 inverts to
  // scale 1/2, shift -0.15.
  auto rows = lines_of(slurp(tmp.str("a.csv")));
  REQUIRE(rows.size() == 3);
  auto fields = split_csv_line(rows[1]);
  REQUIRE(fields.size() >= 7);
  CHECK(std::fabs(std::stod(fields[5]) - 0.5) < 1e-4);
  CHECK(std::fabs(std::stod(fields[6]) + 0.15) < 1e-3);

  SUBCASE("--no-align exposes the remap") {
    REQUIRE(run_cli("eval-images --no-align --pred " + tmp.str("pred/manifest.json") + " --gt " +
                        tmp.str("src/manifest.json") + " --out-json " + tmp.str("n.json"),
                    tmp.str())
                .exit_code == 0);
    json n = json::parse(slurp(tmp.str("n.json")));
    CHECK(n["depth_rmse"].get<double>() > 0.1);
  }
}

TEST_CASE("eval-video stays on the noise floor for ground truth") {
  TempDir tmp("tcdp_cli_ev");
  REQUIRE(run_cli("gen-synth --seed 7 --frames 4 --size 32 --out " + tmp.str("src"), tmp.str())
              .exit_code == 0);
  std::string mani = tmp.str("src/manifest.json");

  CliResult r = run_cli("eval-video --pred " + mani + " --gt " + mani + " --out-json " +
                            tmp.str("v.json") + " --out-csv " + tmp.str("v.csv"),
                        tmp.str());
  REQUIRE(r.exit_code == 0);
  json s = json::parse(slurp(tmp.str("v.json")));
  CHECK(s["image_count"].get<long long>() == 0);
  CHECK(s["pair_count"].get<long long>() == 3);
  CHECK(s["opw_depth"].get<double>() < 1e-3);
  CHECK(s["tc_rmse"].get<double>() < 1e-3);
  CHECK(s["opw_normal"].get<double>() < 1e-2);
  CHECK(s["tc_mean_deg"].get<double>() < 0.2);
  // Identical prediction and reference pairs: the relative term vanishes.
  CHECK(s["tc_abs_deg"].get<double>() == 0.0);
  CHECK(s["pair_depth_pixel_count"].get<long long>() > 0);

  auto csv = lines_of(slurp(tmp.str("v.csv")));
  REQUIRE(csv.size() == 4);
  CHECK(csv[0] ==
        "index,opw_depth,tc_rmse,opw_normal,tc_mean_deg,tc_abs_deg,depth_pixels,normal_pixels");

  SUBCASE("alignment modes run") {
    CHECK(run_cli("eval-video --align none --pred " + mani + " --gt " + mani + " --out-json " +
                      tmp.str("v2.json"),
                  tmp.str())
              .exit_code == 0);
    CHECK(run_cli("eval-video --align per-frame --full-frame --pred " + mani + " --gt " + mani +
                      " --out-json " + tmp.str("v3.json"),
                  tmp.str())
              .exit_code == 0);
  }
  SUBCASE("a single frame cannot be evaluated temporally") {
    REQUIRE(run_cli("gen-synth --seed 7 --frames 1 --size 32 --out " + tmp.str("one"), tmp.str())
                .exit_code == 0);
    CliResult bad = run_cli("eval-video --pred " + tmp.str("one/manifest.json") + " --gt " +
                                tmp.str("one/manifest.json"),
                            tmp.str());
    CHECK(bad.exit_code != 0);
    CHECK(bad.output.find("error") != std::string::npos);
  }
}

TEST_CASE("loss reporting on ground truth") {
  TempDir tmp("tcdp_cli_loss");
  REQUIRE(run_cli("gen-synth --seed 9 --frames 3 --size 32 --out " + tmp.str("src"), tmp.str())
              .exit_code == 0);
  std::string mani = tmp.str("src/manifest.json");

  CliResult r = run_cli("loss --pred " + mani + " --gt " + mani + " --out " + tmp.str("l.json"),
                        tmp.str());
  REQUIRE(r.exit_code == 0);
  json l = json::parse(slurp(tmp.str("l.json")));

  CHECK(l["config"]["lambda_d"].get<double>() == 1.0);
  CHECK(l["config"]["lambda_n"].get<double>() == 0.1);
  CHECK(l["config"]["lambda_s"].get<double>() == 0.05);
  CHECK(l["config"]["lambda_temp_d"].get<double>() == 1.0);
  CHECK(l["config"]["lambda_temp_n"].get<double>() == 0.1);

  REQUIRE(l["stage1"].size() == 3);
  for (const auto& b : l["stage1"]) {
    CHECK(b["total"].get<double>() <= 1e-6);
    CHECK(!b["flags"]["degenerate_alignment"].get<bool>());
    CHECK(!b["flags"]["negative_scale"].get<bool>());
  }
  REQUIRE(!l["stage2"].is_null());
  CHECK(l["stage2"]["total"].get<double>() <= 1e-4);
  CHECK(!l["stage2"]["flags"]["empty_temporal_mask"].get<bool>());

  // The reported total recombines from the reported parts and weights.
  const json& b = l["stage2"];
  const json& c = l["config"];
  double expect = c["lambda_d"].get<double>() *
                      (b["components"]["depth"].get<double>() +
                       c["omega_grad"].get<double>() * b["components"]["depth_grad"].get<double>()) +
                  c["lambda_n"].get<double>() *
                      (b["components"]["normal_base"].get<double>() +
                       c["alpha"].get<double>() * b["components"]["normal_grad"].get<double>() +
                       c["beta"].get<double>() * b["components"]["normal_lap"].get<double>()) +
                  c["lambda_s"].get<double>() * b["components"]["seg"].get<double>() +
                  c["lambda_temp_d"].get<double>() * b["components"]["temp_depth"].get<double>() +
                  c["lambda_temp_n"].get<double>() * b["components"]["temp_normal"].get<double>();
  CHECK(b["total"].get<double>() == doctest::Approx(expect).epsilon(1e-12));

  SUBCASE("stage selection") {
    REQUIRE(run_cli("loss --stage 1 --pred " + mani + " --gt " + mani + " --out " +
                        tmp.str("s1.json"),
                    tmp.str())
                .exit_code == 0);
    json s1 = json::parse(slurp(tmp.str("s1.json")));
    CHECK(s1["stage2"].is_null());
    CHECK(s1["stage1"].size() == 3);

    REQUIRE(run_cli("gen-synth --seed 9 --frames 1 --size 32 --out " + tmp.str("one"), tmp.str())
                .exit_code == 0);
    CHECK(run_cli("loss --stage 2 --pred " + tmp.str("one/manifest.json") + " --gt " +
                      tmp.str("one/manifest.json"),
                  tmp.str())
              .exit_code != 0);
  }
  SUBCASE("config files change the weighting") {
    testutil::TempDir cfg_dir("tcdp_cli_cfg");
    std::ofstream(cfg_dir.str("w.toml")) << "lambda_d = 2.0\nomega_grad = 0.25\n";
    REQUIRE(run_cli("loss --config " + cfg_dir.str("w.toml") + " --pred " + mani + " --gt " +
                        mani + " --out " + tmp.str("w.json"),
                    tmp.str())
                .exit_code == 0);
    json w = json::parse(slurp(tmp.str("w.json")));
    CHECK(w["config"]["lambda_d"].get<double>() == 2.0);
    CHECK(w["config"]["omega_grad"].get<double>() == 0.25);
    CHECK(w["config"]["lambda_n"].get<double>() == 0.1);  // untouched default

    std::ofstream(cfg_dir.str("bad.toml")) << "lambda_d = -1\n";
    CHECK(run_cli("loss --config " + cfg_dir.str("bad.toml") + " --pred " + mani + " --gt " +
                      mani,
                  tmp.str())
              .exit_code != 0);
  }
}

TEST_CASE("gradcheck gate") {
  TempDir tmp("tcdp_cli_grad");
  CliResult r = run_cli("gradcheck", tmp.str());
  REQUIRE(r.exit_code == 0);
  auto pos = r.output.find("max relative error:");
  REQUIRE(pos != std::string::npos);
  double worst = std::strtod(r.output.c_str() + pos + 19, nullptr);
  CHECK(worst < 1e-4);

  CHECK(run_cli("gradcheck --activation gelu --channels 6 --size 3", tmp.str()).exit_code == 0);
  CHECK(run_cli("gradcheck --corrupt", tmp.str()).exit_code == 1);
  CHECK(run_cli("gradcheck --activation tanh", tmp.str()).exit_code != 0);
}

TEST_CASE("report merges summaries") {
  TempDir tmp("tcdp_cli_report");
  REQUIRE(run_cli("gen-synth --seed 4 --frames 3 --size 32 --out " + tmp.str("src"), tmp.str())
              .exit_code == 0);
  std::string mani = tmp.str("src/manifest.json");
  REQUIRE(run_cli("eval-images --pred " + mani + " --gt " + mani + " --out-json " +
                      tmp.str("img.json"),
                  tmp.str())
              .exit_code == 0);
  REQUIRE(run_cli("eval-video --pred " + mani + " --gt " + mani + " --out-json " +
                      tmp.str("vid.json"),
                  tmp.str())
              .exit_code == 0);

  CliResult r = run_cli("report " + tmp.str("img.json") + " " + tmp.str("vid.json") + " --out " +
                            tmp.str("table.csv"),
                        tmp.str());
  REQUIRE(r.exit_code == 0);
  auto rows = lines_of(slurp(tmp.str("table.csv")));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("file,images,pairs,", 0) == 0);
  CHECK(rows[1].rfind(tmp.str("img.json") + ",3,0,", 0) == 0);
  CHECK(rows[2].rfind(tmp.str("vid.json") + ",0,2,", 0) == 0);

  SUBCASE("stdout mode") {
    CliResult out = run_cli("report " + tmp.str("img.json"), tmp.str());
    REQUIRE(out.exit_code == 0);
    CHECK(out.output.rfind("file,images,pairs,", 0) == 0);
  }
  SUBCASE("missing input") {
    CHECK(run_cli("report /nonexistent.json", tmp.str()).exit_code != 0);
  }
}
