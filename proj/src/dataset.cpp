#include "iddm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "iddm/fr.hpp"
#include "iddm/png_io.hpp"
#include "iddm/rng.hpp"

namespace fs = std::filesystem;

namespace iddm {

namespace {

struct Palette {
  double bg[3], skin[3], hair[3], eye[3], mouth[3];
  double face_ry, face_rx;   // fractions of height/width
  double eye_dy, eye_dx, eye_r;
  double mouth_dy, mouth_w, mouth_h;
  double hair_ry, hair_dy;
};

Palette draw_identity(Rng& rng) {
  Palette p;
  for (int c = 0; c < 3; ++c) p.bg[c] = 0.55 + 0.4 * rng.uniform();
  double base = 0.45 + 0.5 * rng.uniform();
  p.skin[0] = base;
  p.skin[1] = base * (0.72 + 0.18 * rng.uniform());
  p.skin[2] = p.skin[1] * (0.68 + 0.2 * rng.uniform());
  for (int c = 0; c < 3; ++c) p.hair[c] = 0.05 + 0.8 * rng.uniform();
  for (int c = 0; c < 3; ++c) p.eye[c] = 0.05 + 0.2 * rng.uniform();
  p.mouth[0] = 0.5 + 0.35 * rng.uniform();
  p.mouth[1] = 0.1 + 0.15 * rng.uniform();
  p.mouth[2] = 0.15 + 0.15 * rng.uniform();
  p.face_ry = 0.28 + 0.08 * rng.uniform();
  p.face_rx = 0.22 + 0.07 * rng.uniform();
  p.eye_dy = -(0.05 + 0.05 * rng.uniform());
  p.eye_dx = 0.10 + 0.05 * rng.uniform();
  p.eye_r = 0.025 + 0.02 * rng.uniform();
  p.mouth_dy = 0.10 + 0.06 * rng.uniform();
  p.mouth_w = 0.06 + 0.05 * rng.uniform();
  p.mouth_h = 0.015 + 0.015 * rng.uniform();
  p.hair_ry = 0.12 + 0.08 * rng.uniform();
  p.hair_dy = -(0.20 + 0.08 * rng.uniform());
  return p;
}

// Soft-edged ellipse membership in [0,1].
double ellipse_alpha(double y, double x, double cy, double cx, double ry, double rx) {
  double dy = (y - cy) / ry, dx = (x - cx) / rx;
  double d = std::sqrt(dy * dy + dx * dx);
  return std::clamp((1.0 - d) / 0.12 + 0.5, 0.0, 1.0);
}

void blend(double* px, const double* color, double alpha) {
  for (int c = 0; c < 3; ++c) px[c] = (1.0 - alpha) * px[c] + alpha * color[c];
}

Tensor render_face(const Palette& p, int h, int w, Rng& rng) {
  double cy = 0.55 + 0.04 * (rng.uniform() - 0.5);
  double cx = 0.50 + 0.04 * (rng.uniform() - 0.5);
  double scale = 0.95 + 0.1 * rng.uniform();
  double brightness = 0.92 + 0.16 * rng.uniform();

  Tensor img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double fy = (y + 0.5) / h, fx = (x + 0.5) / w;
      double* px = &img.at(y, x, 0);
      for (int c = 0; c < 3; ++c) px[c] = p.bg[c];

      blend(px, p.hair,
            ellipse_alpha(fy, fx, cy + p.hair_dy * scale, cx, (p.hair_ry + p.face_ry) * scale,
                          p.face_rx * 1.15 * scale));
      blend(px, p.skin, ellipse_alpha(fy, fx, cy, cx, p.face_ry * scale, p.face_rx * scale));
      blend(px, p.eye,
            ellipse_alpha(fy, fx, cy + p.eye_dy * scale, cx - p.eye_dx * scale, p.eye_r, p.eye_r));
      blend(px, p.eye,
            ellipse_alpha(fy, fx, cy + p.eye_dy * scale, cx + p.eye_dx * scale, p.eye_r, p.eye_r));
      blend(px, p.mouth,
            ellipse_alpha(fy, fx, cy + p.mouth_dy * scale, cx, p.mouth_h, p.mouth_w));

      for (int c = 0; c < 3; ++c) {
        px[c] = std::clamp(px[c] * brightness + 0.01 * rng.normal(), 0.0, 1.0);
      }
    }
  }
  return img;
}

std::vector<IdentityImages> generate_once(const SyntheticDataOptions& opt, std::uint64_t seed) {
  std::vector<IdentityImages> data;
  for (int id = 0; id < opt.n_ids; ++id) {
    Rng id_rng = Rng::derive(seed, {0x6964ULL, static_cast<std::uint64_t>(id)});
    Palette pal = draw_identity(id_rng);
    char name[16];
    std::snprintf(name, sizeof(name), "id_%03d", id);
    std::vector<Tensor> images;
    for (int i = 0; i < opt.imgs_per_id; ++i) {
      Rng img_rng = Rng::derive(seed, {0x696d67ULL, static_cast<std::uint64_t>(id),
                                       static_cast<std::uint64_t>(i)});
      images.push_back(render_face(pal, opt.height, opt.width, img_rng));
    }
    data.emplace_back(name, std::move(images));
  }
  return data;
}

}  // namespace

std::vector<IdentityImages> make_synthetic_identities(const SyntheticDataOptions& opt,
                                                      std::uint64_t seed) {
  if (opt.n_ids < 2) {
    throw std::invalid_argument("make_synthetic_identities: need n_ids >= 2 for a gallery");
  }
  if (opt.imgs_per_id < 1) {
    throw std::invalid_argument("make_synthetic_identities: imgs_per_id must be >= 1");
  }
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    std::uint64_t s = attempt == 0 ? seed : Rng::derive(seed, {0x7265747279ULL,
                                                               static_cast<std::uint64_t>(attempt)})
                                                .next_u64();
    std::vector<IdentityImages> data = generate_once(opt, s);
    if (!opt.verify_separability) return data;

    std::vector<std::vector<Tensor>> grouped;
    for (const auto& [name, imgs] : data) grouped.push_back(imgs);
    ConvEncoder probe = ConvEncoder::random_init("probe", EncoderArch{16, 3, 8, 16},
                                                 Rng::derive(s, {0x70726f6265ULL}).next_u64());
    AlignerSpec aspec;
    ContrastiveConfig ccfg;
    ccfg.steps = 800;
    Rng train_rng = Rng::derive(s, {0x747261696eULL});
    train_encoder_contrastive(probe, grouped, aspec, ccfg, train_rng);
    if (separability_gap(probe, grouped, aspec) > 0.0) {
      return data;
    }
  }
  throw std::runtime_error(
      "make_synthetic_identities: identities remained unseparable after retries");
}

void write_dataset(const std::vector<IdentityImages>& data, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& [name, images] : data) {
    fs::path id_dir = fs::path(dir) / name;
    fs::create_directories(id_dir);
    for (std::size_t i = 0; i < images.size(); ++i) {
      char fname[16];
      std::snprintf(fname, sizeof(fname), "%03zu.png", i);
      write_png(images[i], (id_dir / fname).string());
    }
  }
}

std::vector<IdentityImages> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("load_dataset: not a directory: " + dir);
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) {
    throw std::runtime_error("load_dataset: no identity directories under " + dir);
  }
  std::vector<IdentityImages> data;
  for (const std::string& id : ids) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / id)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<Tensor> images;
    for (const std::string& f : files) images.push_back(read_png(f));
    if (images.empty()) {
      throw std::runtime_error("load_dataset: identity " + id + " has no images");
    }
    data.emplace_back(id, std::move(images));
  }
  return data;
}

}  // namespace iddm
