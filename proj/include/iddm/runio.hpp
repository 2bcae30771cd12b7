#pragma once

#include <string>
#include <vector>

#include "iddm/config.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// Layout of a run directory:
//   runs/<run_id>/{config.json, checkpoints/theta_k.json, checkpoints/theta_final.json,
//                  protected/x_prime_k/*.png, protected/x_prime_final.json,
//                  trace.csv, report.json}
struct RunPaths {
  std::string root;

  explicit RunPaths(std::string run_root) : root(std::move(run_root)) {}
  static RunPaths for_config(const RunConfig& cfg);

  std::string config_json() const { return root + "/config.json"; }
  std::string checkpoints_dir() const { return root + "/checkpoints"; }
  std::string theta_k(int k) const {
    return checkpoints_dir() + "/theta_" + std::to_string(k) + ".json";
  }
  std::string theta_final() const { return checkpoints_dir() + "/theta_final.json"; }
  std::string protected_dir(int k) const {
    return root + "/protected/x_prime_" + std::to_string(k);
  }
  std::string protected_final_sidecar() const { return root + "/protected/x_prime_final.json"; }
  std::string trace_csv() const { return root + "/trace.csv"; }
  std::string report_json() const { return root + "/report.json"; }
};

// Raw-float image list sidecar; bit-exact round trip.
void save_image_sidecar(const std::vector<Tensor>& images, const std::string& path);
std::vector<Tensor> load_image_sidecar(const std::string& path);

// Full protection run: splits the dataset, runs the alternating loop with
// all artifacts persisted, then evaluates. Returns the run directory.
// Existing files in the run directory are overwritten in place, so re-running
// the same config reproduces the directory byte for byte.
std::string run_protect(const RunConfig& cfg);

// No-defense personalization baseline with the same total budget.
std::string run_personalize(const RunConfig& cfg);

// Recomputes the metric suite for a finished run and rewrites report.json.
// Returns the report text.
std::string evaluate_run(const std::string& run_dir);

// One CSV row per run in reference-table column order:
// run_id, fsr, ism, r1_u, r5_u, psnr, ssim.
std::string report_csv_header();
std::string report_csv_row(const std::string& run_dir);

}  // namespace iddm
