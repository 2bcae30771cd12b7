#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "iddm/config.hpp"
#include "iddm/dataset.hpp"
#include "iddm/fr.hpp"
#include "iddm/png_io.hpp"
#include "iddm/project.hpp"
#include "iddm/runio.hpp"
#include "iddm/serialize.hpp"

using namespace iddm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const char* sub = nullptr) const {
    return sub ? (path / sub).string() : path.string();
  }
};

std::string minimal_config_text() {
  return R"({
    "schema_version": 1,
    "dataset_dir": "data",
    "identity": "id_000",
    "encoders_file": "encoders.json",
    "output_root": "runs",
    "seed": 3,
    "schedule_steps": 20,
    "beta_start": 0.001,
    "beta_end": 0.05,
    "hidden_channels": 8,
    "hidden_layers": 1,
    "time_dim": 8
  })";
}

}  // namespace

TEST_CASE("synthetic identities: determinism and layout") {
  SyntheticDataOptions opt;
  opt.n_ids = 2;
  opt.imgs_per_id = 16;
  opt.height = 16;
  opt.width = 16;
  opt.verify_separability = false;

  auto a = make_synthetic_identities(opt, 77);
  auto b = make_synthetic_identities(opt, 77);
  REQUIRE(a.size() == 2);
  CHECK(a[0].first == "id_000");
  CHECK(a[1].first == "id_001");
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].second.size() == 16);
    for (std::size_t j = 0; j < a[i].second.size(); ++j) {
      CHECK(max_abs_diff(a[i].second[j], b[i].second[j]) == 0.0);
      CHECK(in_unit_range(a[i].second[j]));
    }
  }

  CHECK_THROWS_AS(make_synthetic_identities(SyntheticDataOptions{.n_ids = 1}, 1),
                  std::invalid_argument);
}

TEST_CASE("generated identities separate under a freshly trained probe encoder") {
  SyntheticDataOptions opt;
  opt.n_ids = 3;
  opt.imgs_per_id = 8;
  opt.height = 16;
  opt.width = 16;
  opt.verify_separability = true;  // generator runs the gap check itself
  auto data = make_synthetic_identities(opt, 5);

  std::vector<std::vector<Tensor>> groups;
  for (auto& [name, imgs] : data) groups.push_back(imgs);
  ConvEncoder probe = ConvEncoder::random_init("probe", EncoderArch{16, 3, 8, 16}, 6);
  AlignerSpec aspec;
  ContrastiveConfig ccfg;
  ccfg.steps = 700;
  Rng rng(7);
  train_encoder_contrastive(probe, groups, aspec, ccfg, rng);
  CHECK(separability_gap(probe, groups, aspec) > 0.0);
}

TEST_CASE("dataset writes 16 files per identity and round-trips through PNG") {
  TempDir dir("iddm_ds_test");
  SyntheticDataOptions opt;
  opt.n_ids = 2;
  opt.imgs_per_id = 16;
  opt.height = 16;
  opt.width = 16;
  opt.verify_separability = false;
  auto data = make_synthetic_identities(opt, 9);
  write_dataset(data, dir.str("data"));

  int files = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "data" / "id_001")) {
    CHECK(e.path().extension() == ".png");
    ++files;
  }
  CHECK(files == 16);

  auto loaded = load_dataset(dir.str("data"));
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].first == data[i].first);
    REQUIRE(loaded[i].second.size() == data[i].second.size());
    for (std::size_t j = 0; j < loaded[i].second.size(); ++j) {
      // 8-bit quantization error is at most 1/510 per channel.
      CHECK(max_abs_diff(loaded[i].second[j], data[i].second[j]) <= 1.0 / 510.0 + 1e-12);
    }
  }
}

TEST_CASE("PNG: quantization grid and corruption detection") {
  TempDir dir("iddm_png_test");
  Rng rng(11);
  Tensor img(9, 7, 3);
  for (double& v : img.data) v = rng.uniform();
  std::string path = dir.str("t.png");
  write_png(img, path);
  Tensor back = read_png(path);
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    double expect = std::lround(img.data[i] * 255.0) / 255.0;
    CHECK(back.data[i] == doctest::Approx(expect).epsilon(1e-12));
  }

  // Double round-trip is exact (values already on the grid).
  write_png(back, path);
  Tensor again = read_png(path);
  CHECK(max_abs_diff(again, back) == 0.0);

  // Flip one payload byte: the chunk CRC must catch it.
  std::string bytes = read_text_file(path);
  bytes[bytes.size() / 2] ^= 0x40;
  write_text_file(path, bytes);
  CHECK_THROWS_AS(read_png(path), std::runtime_error);
}

TEST_CASE("protected PNGs preserve the budget within quantization tolerance") {
  TempDir dir("iddm_budget_test");
  Rng rng(12);
  const double eta = 0.08;
  Tensor x0(16, 16, 3);
  for (double& v : x0.data) v = std::lround(rng.uniform() * 255.0) / 255.0;  // on-grid original
  Tensor d(16, 16, 3);
  for (double& v : d.data) v = (rng.uniform() - 0.5) * 0.5;
  Tensor xp = project_linf_and_box(x0, d, eta);

  write_png(xp, dir.str("xp.png"));
  Tensor back = read_png(dir.str("xp.png"));
  CHECK(max_abs_diff(back, x0) <= eta + 1.0 / 255.0);
}

TEST_CASE("image sidecar round-trips bit-exactly") {
  TempDir dir("iddm_sidecar_test");
  Rng rng(13);
  std::vector<Tensor> images;
  for (int i = 0; i < 3; ++i) {
    Tensor t(8, 8, 3);
    for (double& v : t.data) v = rng.uniform();
    images.push_back(std::move(t));
  }
  save_image_sidecar(images, dir.str("x.json"));
  auto loaded = load_image_sidecar(dir.str("x.json"));
  REQUIRE(loaded.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(loaded[i].data == images[i].data);
  }
}

TEST_CASE("run config: defaults, validation, strictness") {
  RunConfig cfg = run_config_from_json_text(minimal_config_text());
  CHECK(cfg.protection.eta == doctest::Approx(0.08));
  CHECK(cfg.protection.pgd_steps == 8);
  CHECK(cfg.protection.iterations == 10);
  CHECK(cfg.protection.tau == doctest::Approx(0.03));
  CHECK(cfg.protection.rho == doctest::Approx(0.1));
  CHECK(cfg.effective_run_id() == "id_000_seed3");

  SUBCASE("unknown keys are rejected") {
    std::string text = minimal_config_text();
    text.insert(text.rfind('}'), ", \"mystery_knob\": 4");
    CHECK_THROWS_AS(run_config_from_json_text(text), std::invalid_argument);
  }

  SUBCASE("bad ranges are rejected") {
    std::string text = minimal_config_text();
    text.insert(text.rfind('}'), ", \"rho\": 1.5");
    CHECK_THROWS_AS(run_config_from_json_text(text), std::invalid_argument);
  }

  SUBCASE("missing schema version is rejected") {
    CHECK_THROWS_AS(run_config_from_json_text("{\"dataset_dir\": \"d\"}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json_text("not json"), std::invalid_argument);
  }

  SUBCASE("save -> load -> save is byte-identical") {
    TempDir dir("iddm_cfg_test");
    save_run_config(cfg, dir.str("a.json"));
    RunConfig loaded = load_run_config(dir.str("a.json"));
    save_run_config(loaded, dir.str("b.json"));
    CHECK(read_text_file(dir.str("a.json")) == read_text_file(dir.str("b.json")));
    CHECK(config_hash(cfg) == config_hash(loaded));
  }

  SUBCASE("environment variable overrides the output root") {
    setenv("IDDM_OUTPUT_ROOT", "/tmp/elsewhere", 1);
    RunConfig overridden = run_config_from_json_text(minimal_config_text());
    unsetenv("IDDM_OUTPUT_ROOT");
    CHECK(overridden.output_root == "/tmp/elsewhere");
  }
}

TEST_CASE("evaluate on a directory without a run rejects cleanly") {
  TempDir dir("iddm_empty_run");
  CHECK_THROWS_AS(evaluate_run(dir.str()), std::invalid_argument);
}
