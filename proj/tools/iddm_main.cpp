// Command-line surface for the identity-decoupled personalization pipeline.
//
// Subcommands: gen-data, train-encoders, personalize (no-defense baseline),
// protect (full run), evaluate, report, sweep. Invalid configuration exits
// with 2, runtime failures with 1.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iddm/config.hpp"
#include "iddm/dataset.hpp"
#include "iddm/fr.hpp"
#include "iddm/pipeline.hpp"
#include "iddm/runio.hpp"

namespace {

iddm::RunConfig load_config_with_overrides(const std::string& path, const std::uint64_t* seed,
                                           const std::string* run_id) {
  iddm::RunConfig cfg = iddm::load_run_config(path);
  if (seed) cfg.protection.seed = *seed;
  if (run_id) cfg.run_id = *run_id;
  iddm::validate(cfg);
  return cfg;
}

std::vector<std::vector<iddm::Tensor>> grouped_images(
    const std::vector<iddm::IdentityImages>& data) {
  std::vector<std::vector<iddm::Tensor>> out;
  for (const auto& [name, images] : data) out.push_back(images);
  return out;
}

int cmd_gen_data(const std::string& out_dir, int n_ids, int imgs_per_id, int size,
                 std::uint64_t seed) {
  iddm::SyntheticDataOptions opt;
  opt.n_ids = n_ids;
  opt.imgs_per_id = imgs_per_id;
  opt.height = size;
  opt.width = size;
  auto data = iddm::make_synthetic_identities(opt, seed);
  iddm::write_dataset(data, out_dir);
  std::cout << "wrote " << n_ids << " identities x " << imgs_per_id << " images to " << out_dir
            << "\n";
  return 0;
}

int cmd_train_encoders(const std::string& data_dir, const std::string& out_file, int steps,
                       std::uint64_t seed) {
  auto data = iddm::load_dataset(data_dir);
  auto groups = grouped_images(data);
  iddm::EncoderRegistry reg = iddm::make_default_registry(seed);
  iddm::AlignerSpec aspec;
  iddm::ContrastiveConfig ccfg;
  ccfg.steps = steps;
  std::uint64_t i = 0;
  for (auto& enc : reg.encoders) {
    iddm::Rng rng = iddm::Rng::derive(seed, {0x74726eULL, i++});
    iddm::train_encoder_contrastive(*enc, groups, aspec, ccfg, rng);
    double gap = iddm::separability_gap(*enc, groups, aspec);
    std::cout << enc->name() << ": separability gap " << gap << "\n";
    if (gap <= 0.0) {
      throw std::runtime_error("encoder " + enc->name() + " failed to separate identities");
    }
  }
  iddm::save_registry(reg, out_file);
  std::cout << "wrote " << reg.encoders.size() << " encoders to " << out_file << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_file) {
  std::ostringstream table;
  table << iddm::report_csv_header() << "\n";
  for (const std::string& dir : run_dirs) {
    table << iddm::report_csv_row(dir) << "\n";
  }
  std::cout << table.str();
  if (!out_file.empty()) {
    std::ofstream f(out_file, std::ios::trunc);
    f << table.str();
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::vector<double>& values, const std::uint64_t* seed) {
  if (param != "rho" && param != "eta" && param != "tau") {
    throw std::invalid_argument("sweep: --param must be one of rho, eta, tau");
  }
  if (values.empty()) {
    throw std::invalid_argument("sweep: --values is empty");
  }
  std::vector<std::string> run_dirs;
  for (double v : values) {
    iddm::RunConfig cfg = load_config_with_overrides(config_path, seed, nullptr);
    if (param == "rho") cfg.protection.rho = v;
    if (param == "eta") cfg.protection.eta = v;
    if (param == "tau") cfg.protection.tau = v;
    std::ostringstream id;
    id << cfg.effective_run_id() << "_" << param << v;
    cfg.run_id = id.str();
    iddm::validate(cfg);
    std::cout << "sweep " << param << "=" << v << " -> " << cfg.run_id << "\n";
    run_dirs.push_back(iddm::run_protect(cfg));
  }
  iddm::RunConfig base = load_config_with_overrides(config_path, seed, nullptr);
  std::string out_csv = base.output_root + "/sweep_" + param + ".csv";
  cmd_report(run_dirs, out_csv);
  std::cout << "trend table: " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-decoupled diffusion personalization (desk-scale testbed)"};
  app.require_subcommand(1);

  std::string gd_out = "data";
  int gd_ids = 6, gd_imgs = 16, gd_size = 32;
  std::uint64_t gd_seed = 1;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic identity dataset");
  gen->add_option("--out", gd_out, "output directory");
  gen->add_option("--n-ids", gd_ids, "number of identities (>= 2)");
  gen->add_option("--imgs-per-id", gd_imgs, "images per identity");
  gen->add_option("--size", gd_size, "image side length");
  gen->add_option("--seed", gd_seed, "generation seed");

  std::string te_data = "data", te_out = "encoders.json";
  int te_steps = 4000;
  std::uint64_t te_seed = 2;
  auto* te =
      app.add_subcommand("train-encoders", "train the surrogate and evaluation encoder sets");
  te->add_option("--data", te_data, "dataset directory");
  te->add_option("--out", te_out, "registry output file");
  te->add_option("--steps", te_steps, "contrastive steps per encoder");
  te->add_option("--seed", te_seed, "training seed");

  std::string cfg_path;
  std::uint64_t seed_override = 0;
  std::string run_id_override;
  auto* personalize = app.add_subcommand("personalize", "no-defense personalization baseline");
  auto* protect = app.add_subcommand("protect", "full identity-decoupled run");
  CLI::Option *pe_seed = nullptr, *pr_seed = nullptr, *pe_rid = nullptr, *pr_rid = nullptr;
  personalize->add_option("--config", cfg_path, "run configuration JSON")->required();
  pe_seed = personalize->add_option("--seed", seed_override, "override the config seed");
  pe_rid = personalize->add_option("--run-id", run_id_override, "override the run id");
  protect->add_option("--config", cfg_path, "run configuration JSON")->required();
  pr_seed = protect->add_option("--seed", seed_override, "override the config seed");
  pr_rid = protect->add_option("--run-id", run_id_override, "override the run id");

  std::string eval_run;
  auto* evaluate = app.add_subcommand("evaluate", "recompute metrics for a run directory");
  evaluate->add_option("--run", eval_run, "run directory")->required();

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "combined CSV table over run directories");
  report->add_option("--runs", report_runs, "run directories")->required()->expected(-1);
  report->add_option("--out", report_out, "also write the table to this file");

  std::string sweep_param;
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "protect runs over a parameter grid");
  sweep->add_option("--config", cfg_path, "run configuration JSON")->required();
  sweep->add_option("--param", sweep_param, "rho, eta or tau")->required();
  sweep->add_option("--values", sweep_values, "grid values")->required()->delimiter(',');
  CLI::Option* sw_seed = sweep->add_option("--seed", seed_override, "override the config seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gd_out, gd_ids, gd_imgs, gd_size, gd_seed);
    }
    if (te->parsed()) {
      return cmd_train_encoders(te_data, te_out, te_steps, te_seed);
    }
    if (personalize->parsed()) {
      iddm::RunConfig cfg =
          load_config_with_overrides(cfg_path, pe_seed->count() ? &seed_override : nullptr,
                                     pe_rid->count() ? &run_id_override : nullptr);
      std::cout << "run directory: " << iddm::run_personalize(cfg) << "\n";
      return 0;
    }
    if (protect->parsed()) {
      iddm::RunConfig cfg =
          load_config_with_overrides(cfg_path, pr_seed->count() ? &seed_override : nullptr,
                                     pr_rid->count() ? &run_id_override : nullptr);
      std::cout << "run directory: " << iddm::run_protect(cfg) << "\n";
      return 0;
    }
    if (evaluate->parsed()) {
      std::cout << iddm::evaluate_run(eval_run);
      return 0;
    }
    if (report->parsed()) {
      return cmd_report(report_runs, report_out);
    }
    if (sweep->parsed()) {
      return cmd_sweep(cfg_path, sweep_param, sweep_values,
                       sw_seed->count() ? &seed_override : nullptr);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
