#include "iddm/config.hpp"

#include <cstdlib>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "iddm/serialize.hpp"

namespace iddm {

namespace {

constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const RunConfig& c) {
  const ProtectionConfig& p = c.protection;
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["dataset_dir"] = c.dataset_dir;
  j["identity"] = c.identity;
  j["encoders_file"] = c.encoders_file;
  j["output_root"] = c.output_root;
  j["run_id"] = c.run_id;
  j["init_checkpoint"] = c.init_checkpoint;
  j["seed"] = p.seed;
  j["eta"] = p.eta;
  j["alpha_step"] = p.alpha_step;
  j["pgd_steps"] = p.pgd_steps;
  j["rho"] = p.rho;
  j["tau"] = p.tau;
  j["iterations"] = p.iterations;
  j["budget_interpretation"] =
      p.interpretation == BudgetInterpretation::PerIteration ? "per-iteration" : "cumulative";
  j["lambda_prior"] = p.lambda_prior;
  j["total_ft_steps"] = p.total_ft_steps;
  j["ft_learning_rate"] = p.ft_learning_rate;
  j["ft_batch_size"] = p.ft_batch_size;
  j["prior_set_size"] = p.prior_set_size;
  j["stage2_band"] = {p.stage2_band_lo, p.stage2_band_hi};
  j["ref_count"] = c.ref_count;
  j["protect_count"] = c.protect_count;
  j["eval_count"] = c.eval_count;
  j["schedule_steps"] = c.schedule_steps;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["hidden_channels"] = c.hidden_channels;
  j["hidden_layers"] = c.hidden_layers;
  j["time_dim"] = c.time_dim;
  j["n_generate"] = c.n_generate;
  j["trace"] = c.trace;
  return j;
}

}  // namespace

ArchDescriptor RunConfig::arch(int height, int width) const {
  ArchDescriptor a;
  a.height = height;
  a.width = width;
  a.channels = 3;
  a.hidden = hidden_channels;
  a.hidden_layers = hidden_layers;
  a.time_dim = time_dim;
  return a;
}

NoiseSchedule RunConfig::schedule() const {
  return make_schedule(schedule_steps, beta_start, beta_end);
}

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  return identity + "_seed" + std::to_string(protection.seed);
}

RunConfig run_config_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw std::invalid_argument("config: top level must be an object");
  }
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion) {
    throw std::invalid_argument("config: missing or unsupported schema_version");
  }

  static const std::set<std::string> known = {
      "schema_version", "dataset_dir",   "identity",        "encoders_file",
      "output_root",    "run_id",        "init_checkpoint", "seed",
      "eta",            "alpha_step",    "pgd_steps",       "rho",
      "tau",            "iterations",    "budget_interpretation",
      "lambda_prior",   "total_ft_steps", "ft_learning_rate", "ft_batch_size",
      "prior_set_size", "stage2_band",   "ref_count",       "protect_count",
      "eval_count",     "schedule_steps", "beta_start",      "beta_end",
      "hidden_channels", "hidden_layers", "time_dim",        "n_generate",
      "trace"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }

  RunConfig c;
  ProtectionConfig& p = c.protection;
  auto get = [&j](const char* key, auto& into) {
    if (j.contains(key)) into = j.at(key).get<std::decay_t<decltype(into)>>();
  };
  get("dataset_dir", c.dataset_dir);
  get("identity", c.identity);
  get("encoders_file", c.encoders_file);
  get("output_root", c.output_root);
  get("run_id", c.run_id);
  get("init_checkpoint", c.init_checkpoint);
  get("seed", p.seed);
  get("eta", p.eta);
  get("alpha_step", p.alpha_step);
  get("pgd_steps", p.pgd_steps);
  get("rho", p.rho);
  get("tau", p.tau);
  get("iterations", p.iterations);
  if (j.contains("budget_interpretation")) {
    std::string s = j.at("budget_interpretation").get<std::string>();
    if (s == "per-iteration") {
      p.interpretation = BudgetInterpretation::PerIteration;
    } else if (s == "cumulative") {
      p.interpretation = BudgetInterpretation::Cumulative;
    } else {
      throw std::invalid_argument("config: budget_interpretation must be "
                                  "'per-iteration' or 'cumulative'");
    }
  }
  get("lambda_prior", p.lambda_prior);
  get("total_ft_steps", p.total_ft_steps);
  get("ft_learning_rate", p.ft_learning_rate);
  get("ft_batch_size", p.ft_batch_size);
  get("prior_set_size", p.prior_set_size);
  if (j.contains("stage2_band")) {
    auto band = j.at("stage2_band");
    if (!band.is_array() || band.size() != 2) {
      throw std::invalid_argument("config: stage2_band must be [lo, hi]");
    }
    p.stage2_band_lo = band[0].get<double>();
    p.stage2_band_hi = band[1].get<double>();
  }
  get("ref_count", c.ref_count);
  get("protect_count", c.protect_count);
  get("eval_count", c.eval_count);
  get("schedule_steps", c.schedule_steps);
  get("beta_start", c.beta_start);
  get("beta_end", c.beta_end);
  get("hidden_channels", c.hidden_channels);
  get("hidden_layers", c.hidden_layers);
  get("time_dim", c.time_dim);
  get("n_generate", c.n_generate);
  get("trace", c.trace);

  if (const char* env_root = std::getenv("IDDM_OUTPUT_ROOT");
      env_root != nullptr && env_root[0] != '\0') {
    c.output_root = env_root;
  }

  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json_text(read_text_file(path));
}

std::string run_config_to_json_text(const RunConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  write_text_file(path, run_config_to_json_text(cfg));
}

std::uint32_t config_hash(const RunConfig& cfg) {
  // Identifies the experiment, not its storage location: the same settings
  // rerun into a different output root hash identically.
  RunConfig canonical = cfg;
  canonical.output_root.clear();
  canonical.run_id.clear();
  std::string text = run_config_to_json_text(canonical);
  return crc32_bytes(reinterpret_cast<const unsigned char*>(text.data()), text.size());
}

void validate(const RunConfig& cfg) {
  validate(cfg.protection);
  if (cfg.dataset_dir.empty()) throw std::invalid_argument("config: dataset_dir is empty");
  if (cfg.identity.empty()) throw std::invalid_argument("config: identity is empty");
  if (cfg.output_root.empty()) throw std::invalid_argument("config: output_root is empty");
  if (cfg.ref_count < 1 || cfg.protect_count < 1 || cfg.eval_count < 1) {
    throw std::invalid_argument("config: split sizes must be >= 1");
  }
  if (cfg.schedule_steps < 1) throw std::invalid_argument("config: schedule_steps must be >= 1");
  if (!(cfg.beta_start > 0.0 && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1.0)) {
    throw std::invalid_argument("config: need 0 < beta_start <= beta_end < 1");
  }
  if (cfg.hidden_channels < 1 || cfg.hidden_layers < 0) {
    throw std::invalid_argument("config: invalid network shape");
  }
  if (cfg.time_dim < 2 || cfg.time_dim % 2 != 0) {
    throw std::invalid_argument("config: time_dim must be even and >= 2");
  }
  if (cfg.n_generate < 1) throw std::invalid_argument("config: n_generate must be >= 1");
}

}  // namespace iddm
