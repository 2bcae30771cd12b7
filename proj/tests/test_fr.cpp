#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "iddm/fr.hpp"
#include "iddm/nn.hpp"
#include "iddm/rng.hpp"

using namespace iddm;
using iddm::testing::fd_gradient;
using iddm::testing::relative_error;

namespace {

Tensor random_image(int h, int w, Rng& rng) {
  Tensor t(h, w, 3);
  for (double& v : t.data) v = rng.uniform();
  return t;
}

// Fixed-output stub: ignores the image, returns a constant unit vector.
class ConstStub : public FREncoder {
 public:
  ConstStub(std::string name, std::vector<double> e, int res = 8)
      : name_(std::move(name)), e_(nn::l2_normalize(e)), res_(res) {}
  const std::string& name() const override { return name_; }
  int input_resolution() const override { return res_; }
  int embed_dim() const override { return static_cast<int>(e_.size()); }
  std::vector<double> embed(const Tensor&) const override { return e_; }
  Tensor embed_vjp(const Tensor& aligned, const std::vector<double>&) const override {
    return Tensor(aligned.height, aligned.width, aligned.channels);
  }

 private:
  std::string name_;
  std::vector<double> e_;
  int res_;
};

// Picks one of two unit vectors depending on the mean intensity; used for the
// two-embedding prototype closed form.
class TwoWayStub : public FREncoder {
 public:
  TwoWayStub(std::vector<double> lo, std::vector<double> hi)
      : name_("twoway"), lo_(nn::l2_normalize(lo)), hi_(nn::l2_normalize(hi)) {}
  const std::string& name() const override { return name_; }
  int input_resolution() const override { return 8; }
  int embed_dim() const override { return static_cast<int>(lo_.size()); }
  std::vector<double> embed(const Tensor& img) const override {
    double mean = 0.0;
    for (double v : img.data) mean += v;
    return mean / img.data.size() > 0.5 ? hi_ : lo_;
  }
  Tensor embed_vjp(const Tensor& aligned, const std::vector<double>&) const override {
    return Tensor(aligned.height, aligned.width, aligned.channels);
  }

 private:
  std::string name_;
  std::vector<double> lo_, hi_;
};

// Linear raw embedding with a positive scale knob; the normalized output must
// be invariant to the knob.
class ScaledLinearStub : public FREncoder {
 public:
  ScaledLinearStub(double scale, int res, int dim, std::uint64_t seed)
      : name_("scaled"), scale_(scale), res_(res), dim_(dim) {
    Rng rng(seed);
    w_.resize(static_cast<std::size_t>(dim) * res * res * 3);
    for (double& v : w_) v = rng.normal();
  }
  const std::string& name() const override { return name_; }
  int input_resolution() const override { return res_; }
  int embed_dim() const override { return dim_; }
  std::vector<double> embed(const Tensor& img) const override {
    std::vector<double> raw(dim_, 0.0);
    for (int j = 0; j < dim_; ++j) {
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        raw[j] += scale_ * w_[j * img.data.size() + i] * img.data[i];
      }
    }
    return nn::l2_normalize(raw);
  }
  Tensor embed_vjp(const Tensor& aligned, const std::vector<double>&) const override {
    return Tensor(aligned.height, aligned.width, aligned.channels);
  }

 private:
  std::string name_;
  double scale_;
  int res_, dim_;
  std::vector<double> w_;
};

}  // namespace

TEST_CASE("align: full-image crop at native resolution is the identity") {
  Rng rng(1);
  Tensor img = random_image(12, 12, rng);
  AlignerSpec spec;
  Tensor out = align(img, spec, 12);
  CHECK(max_abs_diff(out, img) == 0.0);
}

TEST_CASE("align: downscale of a constant image stays constant") {
  Tensor img = Tensor::full(16, 16, 3, 0.42);
  AlignerSpec spec;
  Tensor out = align(img, spec, 8);
  CHECK(out.height == 8);
  for (double v : out.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}

TEST_CASE("align: out-of-bounds crop is rejected") {
  Tensor img(8, 8, 3);
  AlignerSpec spec;
  spec.crop_y = 4;
  spec.crop_x = 4;
  spec.crop_h = 6;
  spec.crop_w = 6;
  CHECK_THROWS_AS(align(img, spec, 8), std::out_of_range);
}

TEST_CASE("align gradient matches finite differences") {
  Rng rng(2);
  Tensor img = random_image(12, 10, rng);
  AlignerSpec spec;
  spec.crop_y = 1;
  spec.crop_x = 2;
  spec.crop_h = 10;
  spec.crop_w = 8;
  const int target = 6;
  Tensor probe(target, target, 3);
  for (double& v : probe.data) v = rng.normal();

  auto objective = [&]() {
    Tensor a = align(img, spec, target);
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += probe.data[i] * a.data[i];
    return s;
  };
  Tensor g = align_vjp(img, spec, target, probe);
  std::vector<double> got(g.data.begin(), g.data.end());
  CHECK(relative_error(got, fd_gradient(objective, img.data.data(), img.data.size())) < 1e-4);
}

TEST_CASE("prototype: single reference equals that embedding") {
  Rng rng(3);
  ConvEncoder enc = ConvEncoder::random_init("surrogate/t", EncoderArch{16, 3, 6, 12}, 9);
  AlignerSpec spec;
  Tensor img = random_image(16, 16, rng);
  IdentityPrototype p = prototype(enc, {img}, spec);
  std::vector<double> e = enc.embed(align(img, spec, 16));
  CHECK(relative_error(p.e, e) < 1e-12);
  CHECK(p.source_count == 1);

  // N identical references give the same prototype.
  IdentityPrototype p4 = prototype(enc, {img, img, img, img}, spec);
  CHECK(relative_error(p4.e, e) < 1e-12);
  CHECK(std::abs(nn::dot(p4.e, p4.e) - 1.0) < 1e-6);
}

TEST_CASE("prototype: two embeddings at a known angle match the closed form") {
  // lo for dark images, hi for bright ones; prototype = normalized mean.
  std::vector<double> lo = {1.0, 0.0, 0.0, 0.0};
  std::vector<double> hi = {0.0, 1.0, 0.0, 0.0};
  TwoWayStub enc(lo, hi);
  AlignerSpec spec;
  Tensor dark = Tensor::full(8, 8, 3, 0.1);
  Tensor bright = Tensor::full(8, 8, 3, 0.9);
  IdentityPrototype p = prototype(enc, {dark, bright}, spec);
  // mean = (0.5, 0.5, 0, 0), normalized = (1/sqrt(2), 1/sqrt(2), 0, 0)
  CHECK(p.e[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(p.e[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(p.e[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("prototype: antipodal embeddings raise the zero-norm error") {
  std::vector<double> plus = {1.0, 0.0};
  std::vector<double> minus = {-1.0, 0.0};
  TwoWayStub enc(minus, plus);
  AlignerSpec spec;
  Tensor dark = Tensor::full(8, 8, 3, 0.1);
  Tensor bright = Tensor::full(8, 8, 3, 0.9);
  CHECK_THROWS_AS(prototype(enc, {dark, bright}, spec), std::runtime_error);
  CHECK_THROWS_AS(prototype(enc, {}, spec), std::invalid_argument);
}

TEST_CASE("linkability: self-similarity, orthogonality, dot-product oracle") {
  Rng rng(4);
  AlignerSpec spec;

  SUBCASE("image from a single-ref prototype scores 1") {
    ConvEncoder enc = ConvEncoder::random_init("surrogate/t", EncoderArch{16, 3, 6, 12}, 10);
    Tensor img = random_image(16, 16, rng);
    IdentityPrototype p = prototype(enc, {img}, spec);
    CHECK(linkability(enc, img, p, spec) == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("orthogonal stub scores 0") {
    ConstStub enc("stub", {1.0, 0.0, 0.0});
    IdentityPrototype p;
    p.encoder_name = "stub";
    p.e = {0.0, 1.0, 0.0};
    p.source_count = 1;
    Tensor img = random_image(8, 8, rng);
    CHECK(linkability(enc, img, p, spec) == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("random pair matches the dot-product oracle") {
    ConvEncoder enc = ConvEncoder::random_init("surrogate/t", EncoderArch{16, 3, 6, 12}, 11);
    Tensor img = random_image(16, 16, rng);
    std::vector<double> raw(12);
    for (double& v : raw) v = rng.normal();
    IdentityPrototype p;
    p.encoder_name = "surrogate/t";
    p.e = nn::l2_normalize(raw);
    p.source_count = 1;
    std::vector<double> e = enc.embed(align(img, spec, 16));
    double oracle = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) oracle += e[i] * p.e[i];
    CHECK(linkability(enc, img, p, spec) == doctest::Approx(oracle).epsilon(1e-12));
  }

  SUBCASE("prototype/encoder name mismatch is rejected") {
    ConstStub enc("stub-a", {1.0, 0.0});
    IdentityPrototype p;
    p.encoder_name = "stub-b";
    p.e = {1.0, 0.0};
    Tensor img = random_image(8, 8, rng);
    CHECK_THROWS_AS(linkability(enc, img, p, spec), std::invalid_argument);
  }
}

TEST_CASE("linkability is invariant to positive rescaling of raw embeddings") {
  Rng rng(5);
  Tensor img = random_image(8, 8, rng);
  AlignerSpec spec;
  ScaledLinearStub enc1(1.0, 8, 6, 99);
  ScaledLinearStub enc7(7.31, 8, 6, 99);
  std::vector<double> raw(6);
  for (double& v : raw) v = rng.normal();
  IdentityPrototype p;
  p.encoder_name = "scaled";
  p.e = nn::l2_normalize(raw);
  p.source_count = 1;
  CHECK(linkability(enc1, img, p, spec) ==
        doctest::Approx(linkability(enc7, img, p, spec)).epsilon(1e-12));
}

TEST_CASE("ensemble_weights: symmetry, closed form, edge cases") {
  SUBCASE("equal similarities give uniform weights") {
    std::vector<double> w = ensemble_weights({0.4, 0.4, 0.4, 0.4}, 0.03);
    for (double v : w) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("M=2 closed form at tau 0.03") {
    std::vector<double> w = ensemble_weights({0.8, 0.2}, 0.03);
    double expect = 1.0 / (1.0 + std::exp(-20.0));
    CHECK(w[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.0 - expect).epsilon(1e-9));
  }

  SUBCASE("single encoder gets weight 1 regardless of tau") {
    CHECK(ensemble_weights({-0.3}, 0.03)[0] == doctest::Approx(1.0));
    CHECK(ensemble_weights({-0.3}, 17.0)[0] == doctest::Approx(1.0));
  }

  SUBCASE("non-positive tau and empty input are rejected") {
    CHECK_THROWS_AS(ensemble_weights({0.1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ensemble_weights({0.1}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ensemble_weights({}, 0.03), std::invalid_argument);
  }

  SUBCASE("weights sum to 1 and lie in (0,1]") {
    // Positivity is checked at the working temperature; at extreme tau the
    // smallest exponents underflow to literal zero in double precision, so
    // only the sum-to-1 half of the invariant survives there.
    Rng rng(6);
    for (int trial = 0; trial < 1000; ++trial) {
      int m = 1 + rng.uniform_int(6);
      std::vector<double> sims(m);
      for (double& s : sims) s = -1.0 + 2.0 * rng.uniform();
      std::vector<double> w = ensemble_weights(sims, 0.03);
      double total = 0.0;
      for (double v : w) {
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-9);

      std::vector<double> w_cold = ensemble_weights(sims, 1e-4);
      double total_cold = 0.0;
      for (double v : w_cold) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        total_cold += v;
      }
      CHECK(std::abs(total_cold - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("ensemble aggregate: temperature limits") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int m = 2 + rng.uniform_int(5);
    std::vector<double> sims(m);
    double mx = -2.0, mean = 0.0;
    for (double& s : sims) {
      s = -1.0 + 2.0 * rng.uniform();
      mx = std::max(mx, s);
      mean += s;
    }
    mean /= m;
    CHECK(std::abs(ensemble_aggregate(sims, 1e-4) - mx) < 1e-3);
    CHECK(std::abs(ensemble_aggregate(sims, 1e3) - mean) < 1e-3);
    // S always lies between min and max similarity.
    double s_mid = ensemble_aggregate(sims, 0.03);
    CHECK(s_mid <= mx + 1e-12);
    CHECK(s_mid >= *std::min_element(sims.begin(), sims.end()) - 1e-12);
  }
}

TEST_CASE("id_loss: bounds and the softmax-weighted oracle") {
  Rng rng(8);
  AlignerSpec spec;
  Tensor img = random_image(8, 8, rng);

  SUBCASE("all similarities 1 give loss 2; all -1 give 0") {
    std::vector<double> e = {1.0, 0.0};
    ConstStub a("a", e), b("b", e), c("c", e);
    std::vector<const FREncoder*> encs = {&a, &b, &c};
    std::vector<IdentityPrototype> protos;
    for (const FREncoder* enc : encs) {
      protos.push_back({enc->name(), {1.0, 0.0}, 1});
    }
    CHECK(id_loss(encs, protos, img, 0.03, spec) == doctest::Approx(2.0).epsilon(1e-12));
    for (auto& p : protos) p.e = {-1.0, 0.0};
    CHECK(id_loss(encs, protos, img, 0.03, spec) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("M=3 random sims match an independent softmax-weighted oracle") {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> sims(3);
      for (double& s : sims) s = -1.0 + 2.0 * rng.uniform();
      // Stub encoders whose prototypes realize exactly these similarities:
      // embedding (1,0), prototype (s, sqrt(1-s^2)).
      ConstStub a("a", {1.0, 0.0}), b("b", {1.0, 0.0}), c("c", {1.0, 0.0});
      std::vector<const FREncoder*> encs = {&a, &b, &c};
      std::vector<IdentityPrototype> protos;
      for (int m = 0; m < 3; ++m) {
        protos.push_back({encs[m]->name(),
                          {sims[m], std::sqrt(std::max(0.0, 1.0 - sims[m] * sims[m]))},
                          1});
      }
      const double tau = 0.03;
      double denom = 0.0, num = 0.0;
      double mx = *std::max_element(sims.begin(), sims.end());
      for (double s : sims) {
        double w = std::exp((s - mx) / tau);
        denom += w;
        num += w * s;
      }
      double expect = 1.0 + num / denom;
      CHECK(id_loss(encs, protos, img, tau, spec) == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  SUBCASE("id_loss stays in [0,2] for random unit prototypes") {
    ConstStub a("a", {0.6, 0.8}), b("b", {-0.8, 0.6});
    std::vector<const FREncoder*> encs = {&a, &b};
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<IdentityPrototype> protos;
      for (const FREncoder* enc : encs) {
        std::vector<double> raw = {rng.normal(), rng.normal()};
        protos.push_back({enc->name(), nn::l2_normalize(raw), 1});
      }
      double loss = id_loss(encs, protos, img, 0.03, spec);
      CHECK(loss >= 0.0);
      CHECK(loss <= 2.0);
    }
  }
}

TEST_CASE("id_loss gradient matches finite differences on conv encoders") {
  Rng rng(9);
  Tensor img(16, 16, 3);
  for (double& v : img.data) v = 0.2 + 0.6 * rng.uniform();
  AlignerSpec spec;

  ConvEncoder e1 = ConvEncoder::random_init("surrogate/g1", EncoderArch{16, 3, 5, 10}, 31);
  ConvEncoder e2 = ConvEncoder::random_init("surrogate/g2", EncoderArch{8, 3, 4, 8}, 32);
  std::vector<const FREncoder*> encs = {&e1, &e2};
  std::vector<IdentityPrototype> protos;
  for (const FREncoder* enc : encs) {
    std::vector<double> raw(enc->embed_dim());
    for (double& v : raw) v = rng.normal();
    protos.push_back({enc->name(), nn::l2_normalize(raw), 1});
  }

  Tensor grad;
  id_loss_grad(encs, protos, img, 0.03, spec, grad);
  auto objective = [&]() { return id_loss(encs, protos, img, 0.03, spec); };
  std::vector<double> got(grad.data.begin(), grad.data.end());
  CHECK(relative_error(got, fd_gradient(objective, img.data.data(), img.data.size(), 1e-6)) <
        1e-3);
}

TEST_CASE("registry: round trip, namespaces, contrastive separation") {
  EncoderRegistry reg = make_default_registry(77);
  CHECK(reg.surrogates().size() == 4);
  CHECK(reg.evaluators().size() == 3);
  for (const FREncoder* s : reg.surrogates()) {
    for (const FREncoder* e : reg.evaluators()) CHECK(s->name() != e->name());
  }

  auto dir = std::filesystem::temp_directory_path() / "iddm_fr_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "encoders.json").string();
  save_registry(reg, path);
  EncoderRegistry loaded = load_registry(path);
  REQUIRE(loaded.encoders.size() == reg.encoders.size());
  for (std::size_t i = 0; i < reg.encoders.size(); ++i) {
    CHECK(loaded.encoders[i]->name() == reg.encoders[i]->name());
    CHECK(loaded.encoders[i]->params() == reg.encoders[i]->params());
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("prototype store round-trips") {
  Rng rng(10);
  std::vector<IdentityPrototype> protos;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> raw(8);
    for (double& v : raw) v = rng.normal();
    protos.push_back({"surrogate/p" + std::to_string(i), nn::l2_normalize(raw), 4});
  }
  auto dir = std::filesystem::temp_directory_path() / "iddm_proto_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "protos.json").string();
  save_prototypes(protos, path);
  std::vector<IdentityPrototype> loaded = load_prototypes(path);
  REQUIRE(loaded.size() == protos.size());
  for (const IdentityPrototype& p : protos) {
    auto it = std::find_if(loaded.begin(), loaded.end(),
                           [&](const IdentityPrototype& q) { return q.encoder_name == p.encoder_name; });
    REQUIRE(it != loaded.end());
    CHECK(it->e == p.e);
    CHECK(it->source_count == p.source_count);
  }
  std::filesystem::remove_all(dir);
}
