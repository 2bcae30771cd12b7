#pragma once

#include <cstdint>
#include <string>

#include "iddm/denoiser.hpp"
#include "iddm/pipeline.hpp"

namespace iddm {

// Flat, schema-versioned run configuration. Loading validates every field
// and rejects unknown keys. IDDM_OUTPUT_ROOT in the environment overrides
// output_root.
struct RunConfig {
  std::string dataset_dir = "data";
  std::string identity = "id_000";
  std::string encoders_file = "encoders.json";
  std::string output_root = "runs";
  std::string run_id;          // derived from seed when empty
  std::string init_checkpoint; // optional starting model

  ProtectionConfig protection;

  int ref_count = 4;
  int protect_count = 4;
  int eval_count = 4;

  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  int hidden_channels = 48;
  int hidden_layers = 3;
  int time_dim = 32;

  int n_generate = 16;
  bool trace = true;

  ArchDescriptor arch(int height = 32, int width = 32) const;
  NoiseSchedule schedule() const;
  std::string effective_run_id() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

// CRC-32 of the canonical JSON form; stamped into reports.
std::uint32_t config_hash(const RunConfig& cfg);

void validate(const RunConfig& cfg);

}  // namespace iddm
