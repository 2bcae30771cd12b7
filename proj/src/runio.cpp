#include "iddm/runio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "iddm/dataset.hpp"
#include "iddm/eval.hpp"
#include "iddm/pipeline.hpp"
#include "iddm/png_io.hpp"
#include "iddm/serialize.hpp"

namespace fs = std::filesystem;

namespace iddm {

namespace {

constexpr int kReportVersion = 1;

struct LoadedRun {
  RunConfig cfg;
  std::vector<IdentityImages> dataset;
  std::vector<Tensor> identity_images;
  DatasetSplit split;
  EncoderRegistry registry;
  NoiseSchedule sched;
};

const std::vector<std::string> kVocab = {kInstanceLabel, kPriorLabel};

LoadedRun load_context(const RunConfig& cfg) {
  LoadedRun ctx{cfg, load_dataset(cfg.dataset_dir), {}, {}, load_registry(cfg.encoders_file),
                cfg.schedule()};
  for (const auto& [name, images] : ctx.dataset) {
    if (name == cfg.identity) ctx.identity_images = images;
  }
  if (ctx.identity_images.empty()) {
    throw std::invalid_argument("dataset has no identity '" + cfg.identity + "' under " +
                                cfg.dataset_dir);
  }
  SplitSizes sizes{cfg.ref_count, cfg.protect_count, cfg.eval_count};
  Rng split_rng = Rng::derive(cfg.protection.seed, {kSaltSplit});
  ctx.split = split_dataset(ctx.identity_images, sizes, split_rng);
  return ctx;
}

DenoiserState initial_state(const RunConfig& cfg, const Tensor& sample_image) {
  if (!cfg.init_checkpoint.empty()) {
    return load_checkpoint(cfg.init_checkpoint);
  }
  ArchDescriptor arch = cfg.arch(sample_image.height, sample_image.width);
  return init_denoiser(arch, kVocab,
                       Rng::derive(cfg.protection.seed, {kSaltInit}).next_u64());
}

void write_protected_pngs(const RunPaths& paths, int k, const std::vector<Tensor>& images) {
  fs::create_directories(paths.protected_dir(k));
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "%03zu.png", i);
    write_png(images[i], paths.protected_dir(k) + "/" + name);
  }
}

nlohmann::json json_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

// PSNR can be +inf (the "identical" sentinel), which JSON cannot carry.
nlohmann::json json_psnr(double v) {
  if (psnr_is_identical_sentinel(v)) return "identical";
  return v;
}

}  // namespace

RunPaths RunPaths::for_config(const RunConfig& cfg) {
  return RunPaths(cfg.output_root + "/" + cfg.effective_run_id());
}

void save_image_sidecar(const std::vector<Tensor>& images, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  nlohmann::json arr = nlohmann::json::array();
  for (const Tensor& t : images) {
    arr.push_back({{"height", t.height},
                   {"width", t.width},
                   {"channels", t.channels},
                   {"data", doubles_to_b64(t.data)}});
  }
  j["images"] = std::move(arr);
  write_text_file(path, j.dump() + "\n");
}

std::vector<Tensor> load_image_sidecar(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  std::vector<Tensor> out;
  for (const auto& je : j.at("images")) {
    Tensor t(je.at("height").get<int>(), je.at("width").get<int>(), je.at("channels").get<int>());
    t.data = b64_to_doubles(je.at("data").get<std::string>());
    if (t.data.size() != static_cast<std::size_t>(t.height) * t.width * t.channels) {
      throw std::runtime_error("image sidecar shape mismatch in " + path);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string run_protect(const RunConfig& cfg) {
  LoadedRun ctx = load_context(cfg);
  RunPaths paths = RunPaths::for_config(cfg);
  fs::create_directories(paths.checkpoints_dir());
  save_run_config(cfg, paths.config_json());

  std::vector<const FREncoder*> surrogates = ctx.registry.surrogates();
  if (surrogates.empty()) {
    throw std::invalid_argument("encoder registry has no surrogate encoders: " +
                                cfg.encoders_file);
  }
  DenoiserState init = initial_state(cfg, ctx.identity_images.front());
  AlignerSpec aspec;

  std::ofstream trace_file;
  if (cfg.trace) {
    trace_file.open(paths.trace_csv(), std::ios::trunc);
    trace_file << "run_id,image_id,step,stage,loss,max_delta\n";
  }
  const std::string run_id = cfg.effective_run_id();

  RunHooks hooks;
  hooks.on_state = [&](int k, const DenoiserState& s) { save_checkpoint(s, paths.theta_k(k)); };
  hooks.on_protected = [&](int k, const std::vector<Tensor>& xs) {
    write_protected_pngs(paths, k, xs);
  };
  if (cfg.trace) {
    hooks.trace = [&](const PgdTraceRow& row) {
      trace_file << run_id << ',' << row.image_index << ',' << row.global_step << ','
                 << row.stage << ',' << row.loss << ',' << row.max_delta << '\n';
    };
  }

  IddmResult result = run_iddm(ctx.split, init, cfg.protection, surrogates, aspec, ctx.sched,
                               hooks);
  save_checkpoint(result.final_state, paths.theta_final());
  save_image_sidecar(result.protected_set, paths.protected_final_sidecar());
  if (trace_file.is_open()) trace_file.close();

  evaluate_run(paths.root);
  return paths.root;
}

std::string run_personalize(const RunConfig& cfg) {
  LoadedRun ctx = load_context(cfg);
  RunPaths paths = RunPaths::for_config(cfg);
  fs::create_directories(paths.checkpoints_dir());
  save_run_config(cfg, paths.config_json());

  DenoiserState init = initial_state(cfg, ctx.identity_images.front());
  DenoiserState final_state = no_defense_baseline(ctx.split, init, cfg.protection, ctx.sched);
  save_checkpoint(final_state, paths.theta_final());

  evaluate_run(paths.root);
  return paths.root;
}

std::string evaluate_run(const std::string& run_dir) {
  RunPaths paths(run_dir);
  if (!fs::exists(paths.config_json())) {
    throw std::invalid_argument("evaluate: no config.json under '" + run_dir +
                                "' (not a run directory?)");
  }
  if (!fs::exists(paths.theta_final())) {
    throw std::invalid_argument("evaluate: run has no final checkpoint: " + run_dir);
  }
  RunConfig cfg = load_run_config(paths.config_json());
  LoadedRun ctx = load_context(cfg);

  std::vector<const FREncoder*> evals = ctx.registry.evaluators();
  if (evals.empty()) {
    throw std::invalid_argument("encoder registry has no evaluation encoders: " +
                                cfg.encoders_file);
  }
  require_disjoint_namespaces(ctx.registry.surrogates(), evals);
  AlignerSpec aspec;

  // Generations from the final model under the instance label, persisted to
  // gen/<label>/<index>.png.
  DenoiserState final_state = load_checkpoint(paths.theta_final());
  Rng sample_rng = Rng::derive(cfg.protection.seed, {kSaltSample});
  std::vector<Tensor> generated =
      sample(final_state, kInstanceLabel, cfg.n_generate, ctx.sched, sample_rng);
  {
    fs::path gen_dir = fs::path(run_dir) / "gen" / kInstanceLabel;
    fs::create_directories(gen_dir);
    for (std::size_t i = 0; i < generated.size(); ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "%03zu.png", i);
      write_png(generated[i], (gen_dir / name).string());
    }
  }

  // Gallery over every dataset identity; the protected identity contributes
  // its held-out clean images so gallery references stay disjoint from the
  // training photos.
  std::vector<std::pair<std::string, std::vector<Tensor>>> gallery_src;
  for (const auto& [name, images] : ctx.dataset) {
    if (name == cfg.identity) {
      gallery_src.emplace_back(name, ctx.split.eval);
    } else {
      gallery_src.emplace_back(name, images);
    }
  }
  Gallery gallery = build_gallery(gallery_src, evals, aspec);

  FaceDetector detector = toy_detector();
  double fsr_value = fsr(generated, detector);
  std::vector<Tensor> detected;
  for (const Tensor& g : generated) {
    if (detector(g)) detected.push_back(g);
  }

  nlohmann::json per_encoder = nlohmann::json::object();
  double sim_sum = 0.0;
  int sim_n = 0;
  const int k5 = std::min(5, gallery.size());
  for (const FREncoder* enc : evals) {
    IdentityPrototype proto = prototype(*enc, ctx.split.eval, aspec);
    std::optional<double> ism = ism_metric(generated, *enc, proto, aspec, detector);
    nlohmann::json entry;
    entry["sim_mean"] = json_or_null(ism);
    if (ism) {
      sim_sum += *ism;
      ++sim_n;
    }
    if (!detected.empty()) {
      entry["r1_u"] = topk_retrieval(detected, gallery, cfg.identity, 1, *enc, aspec);
      entry["r5_u"] = topk_retrieval(detected, gallery, cfg.identity, k5, *enc, aspec);
    } else {
      entry["r1_u"] = nullptr;
      entry["r5_u"] = nullptr;
    }
    per_encoder[enc->name()] = std::move(entry);
  }

  nlohmann::json report;
  report["version"] = kReportVersion;
  report["desk_scale"] = true;  // synthetic testbed; not comparable to full-scale results
  report["run_id"] = cfg.effective_run_id();
  report["config_hash"] = config_hash(cfg);
  report["fsr"] = fsr_value;
  report["per_encoder"] = std::move(per_encoder);
  report["sim_mean_avg"] = sim_n > 0 ? nlohmann::json(sim_sum / sim_n) : nlohmann::json(nullptr);

  if (fs::exists(paths.protected_final_sidecar())) {
    std::vector<Tensor> x_prime = load_image_sidecar(paths.protected_final_sidecar());
    BudgetReport budget = budget_report(ctx.split.protect, x_prime);
    report["psnr_mean"] = json_psnr(budget.psnr_mean);
    report["ssim_mean"] = budget.ssim_mean;
    double max_dev = 0.0;
    for (std::size_t i = 0; i < x_prime.size(); ++i) {
      max_dev = std::max(max_dev, max_abs_diff(ctx.split.protect[i], x_prime[i]));
    }
    report["max_linf_deviation"] = max_dev;
  } else {
    report["psnr_mean"] = nullptr;
    report["ssim_mean"] = nullptr;
    report["max_linf_deviation"] = nullptr;
  }

  report["counts"] = {{"n_generated", static_cast<int>(generated.size())},
                      {"n_detected", static_cast<int>(detected.size())},
                      {"gallery_size", gallery.size()},
                      {"n_reference", static_cast<int>(ctx.split.reference.size())},
                      {"n_protect", static_cast<int>(ctx.split.protect.size())},
                      {"n_eval", static_cast<int>(ctx.split.eval.size())}};

  std::string text = report.dump(2) + "\n";
  write_text_file(paths.report_json(), text);
  return text;
}

std::string report_csv_header() { return "run_id,fsr,ism,r1_u,r5_u,psnr,ssim"; }

std::string report_csv_row(const std::string& run_dir) {
  RunPaths paths(run_dir);
  nlohmann::json r = nlohmann::json::parse(read_text_file(paths.report_json()));
  auto cell = [](const nlohmann::json& v) -> std::string {
    if (v.is_null()) return "n/a";
    if (v.is_string()) return v.get<std::string>();
    std::ostringstream ss;
    ss << v.get<double>();
    return ss.str();
  };
  // Average the per-encoder retrieval rates for the summary row.
  double r1 = 0.0, r5 = 0.0;
  int n = 0;
  bool has_rk = true;
  for (const auto& [name, entry] : r.at("per_encoder").items()) {
    if (entry.at("r1_u").is_null()) {
      has_rk = false;
      break;
    }
    r1 += entry.at("r1_u").get<double>();
    r5 += entry.at("r5_u").get<double>();
    ++n;
  }
  std::ostringstream row;
  row << r.at("run_id").get<std::string>() << ',' << cell(r.at("fsr")) << ','
      << cell(r.at("sim_mean_avg")) << ',';
  if (has_rk && n > 0) {
    row << (r1 / n) << ',' << (r5 / n) << ',';
  } else {
    row << "n/a,n/a,";
  }
  row << cell(r.at("psnr_mean")) << ',' << cell(r.at("ssim_mean"));
  return row.str();
}

}  // namespace iddm
