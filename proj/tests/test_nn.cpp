#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "helpers.hpp"
#include "iddm/nn.hpp"
#include "iddm/rng.hpp"

using namespace iddm;
using iddm::testing::fd_gradient;
using iddm::testing::relative_error;

namespace {

std::vector<double> randn(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

}  // namespace

TEST_CASE("conv3x3 gradients match finite differences") {
  Rng rng(1);
  const int h = 5, w = 4, cin = 3, cout = 2;
  std::vector<double> in = randn(h * w * cin, rng, 0.5);
  std::vector<double> wgt = randn(nn::conv3x3_weight_count(cin, cout), rng, 0.3);
  std::vector<double> bias = randn(cout, rng, 0.1);
  std::vector<double> probe = randn(h * w * cout, rng);  // random linear functional

  auto objective = [&]() {
    std::vector<double> out(h * w * cout);
    nn::conv3x3_forward(in.data(), h, w, cin, wgt.data(), bias.data(), cout, out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += probe[i] * out[i];
    return s;
  };

  std::vector<double> g_in(in.size()), g_w(wgt.size(), 0.0), g_b(bias.size(), 0.0);
  nn::conv3x3_backward(in.data(), h, w, cin, wgt.data(), cout, probe.data(), g_in.data(),
                       g_w.data(), g_b.data());

  CHECK(relative_error(g_in, fd_gradient(objective, in.data(), in.size())) < 1e-7);
  CHECK(relative_error(g_w, fd_gradient(objective, wgt.data(), wgt.size())) < 1e-7);
  CHECK(relative_error(g_b, fd_gradient(objective, bias.data(), bias.size())) < 1e-7);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(2);
  const int in_dim = 7, out_dim = 4;
  std::vector<double> in = randn(in_dim, rng);
  std::vector<double> wgt = randn(static_cast<std::size_t>(out_dim) * in_dim, rng, 0.4);
  std::vector<double> bias = randn(out_dim, rng, 0.1);
  std::vector<double> probe = randn(out_dim, rng);

  auto objective = [&]() {
    std::vector<double> out(out_dim);
    nn::linear_forward(in.data(), in_dim, wgt.data(), bias.data(), out_dim, out.data());
    double s = 0.0;
    for (int i = 0; i < out_dim; ++i) s += probe[i] * out[i];
    return s;
  };

  std::vector<double> g_in(in.size()), g_w(wgt.size(), 0.0), g_b(bias.size(), 0.0);
  nn::linear_backward(in.data(), in_dim, wgt.data(), out_dim, probe.data(), g_in.data(),
                      g_w.data(), g_b.data());
  CHECK(relative_error(g_in, fd_gradient(objective, in.data(), in.size())) < 1e-8);
  CHECK(relative_error(g_w, fd_gradient(objective, wgt.data(), wgt.size())) < 1e-8);
  CHECK(relative_error(g_b, fd_gradient(objective, bias.data(), bias.size())) < 1e-8);
}

TEST_CASE("silu gradient matches finite differences") {
  Rng rng(3);
  std::vector<double> in = randn(32, rng, 2.0);
  std::vector<double> probe = randn(32, rng);
  auto objective = [&]() {
    std::vector<double> out(in.size());
    nn::silu_forward(in.data(), in.size(), out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += probe[i] * out[i];
    return s;
  };
  std::vector<double> g(in.size());
  nn::silu_backward(in.data(), in.size(), probe.data(), g.data());
  CHECK(relative_error(g, fd_gradient(objective, in.data(), in.size())) < 1e-8);
}

TEST_CASE("avgpool2 gradient matches finite differences") {
  Rng rng(4);
  const int h = 6, w = 4, ch = 3;
  std::vector<double> in = randn(h * w * ch, rng);
  std::vector<double> probe = randn(h / 2 * (w / 2) * ch, rng);
  auto objective = [&]() {
    std::vector<double> out(h / 2 * (w / 2) * ch);
    nn::avgpool2_forward(in.data(), h, w, ch, out.data());
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += probe[i] * out[i];
    return s;
  };
  std::vector<double> g(in.size());
  nn::avgpool2_backward(h, w, ch, probe.data(), g.data());
  CHECK(relative_error(g, fd_gradient(objective, in.data(), in.size())) < 1e-9);
}

TEST_CASE("bilinear resize preserves constants and matches finite differences") {
  Tensor c = Tensor::full(8, 8, 3, 0.37);
  Tensor down = nn::bilinear_resize(c, 4, 4);
  for (double v : down.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  Rng rng(5);
  Tensor in(6, 8, 2);
  for (double& v : in.data) v = rng.uniform();
  Tensor probe(4, 4, 2);
  for (double& v : probe.data) v = rng.normal();

  auto objective = [&]() {
    Tensor out = nn::bilinear_resize(in, 4, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += probe.data[i] * out.data[i];
    return s;
  };
  Tensor g = nn::bilinear_resize_vjp(6, 8, 2, probe);
  std::vector<double> got(g.data.begin(), g.data.end());
  CHECK(relative_error(got, fd_gradient(objective, in.data.data(), in.data.size())) < 1e-8);
}

TEST_CASE("l2_normalize: unit output and vjp") {
  Rng rng(6);
  std::vector<double> v = randn(12, rng);
  std::vector<double> y = nn::l2_normalize(v);
  CHECK(nn::dot(y, y) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> probe = randn(12, rng);
  auto objective = [&]() {
    std::vector<double> u = nn::l2_normalize(v);
    return nn::dot(probe, u);
  };
  std::vector<double> g = nn::l2_normalize_vjp(v, probe);
  CHECK(relative_error(g, fd_gradient(objective, v.data(), v.size())) < 1e-8);

  std::vector<double> zero(5, 0.0);
  CHECK_THROWS(nn::l2_normalize(zero));
}
