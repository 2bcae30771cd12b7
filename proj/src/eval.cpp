#include "iddm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "iddm/nn.hpp"

namespace iddm {

FaceDetector toy_detector(double min_variance) {
  return [min_variance](const Tensor& img) {
    double mean = 0.0;
    for (double v : img.data) mean += v;
    mean /= static_cast<double>(img.data.size());
    double var = 0.0;
    for (double v : img.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(img.data.size());
    return var >= min_variance;
  };
}

double fsr(const std::vector<Tensor>& images, const FaceDetector& detector) {
  if (images.empty()) {
    throw std::invalid_argument("fsr: empty image list");
  }
  if (!detector) {
    throw std::invalid_argument("fsr: detector not configured");
  }
  int detected = 0;
  for (const Tensor& img : images) {
    if (detector(img)) ++detected;
  }
  return static_cast<double>(detected) / static_cast<double>(images.size());
}

void require_eval_encoder(const FREncoder& enc) {
  if (enc.name().rfind(kEvalPrefix, 0) != 0) {
    throw std::invalid_argument("evaluation requires an 'eval/' encoder, got: " + enc.name());
  }
}

void require_disjoint_namespaces(const std::vector<const FREncoder*>& optimization,
                                 const std::vector<const FREncoder*>& evaluation) {
  std::set<std::string> opt_names;
  for (const FREncoder* e : optimization) opt_names.insert(e->name());
  for (const FREncoder* e : evaluation) {
    require_eval_encoder(*e);
    if (opt_names.count(e->name())) {
      throw std::invalid_argument("encoder used on both sides: " + e->name());
    }
  }
}

std::optional<double> ism_metric(const std::vector<Tensor>& images, const FREncoder& eval_encoder,
                                 const IdentityPrototype& clean_prototype,
                                 const AlignerSpec& spec, const FaceDetector& detector) {
  require_eval_encoder(eval_encoder);
  if (images.empty()) {
    throw std::invalid_argument("ism_metric: empty image list");
  }
  double total = 0.0;
  int n = 0;
  for (const Tensor& img : images) {
    if (detector && !detector(img)) continue;
    total += linkability(eval_encoder, img, clean_prototype, spec);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / n;
}

Gallery build_gallery(const std::vector<std::pair<std::string, std::vector<Tensor>>>& identities,
                      const std::vector<const FREncoder*>& eval_encoders, const AlignerSpec& spec,
                      int refs_per_identity) {
  Gallery g;
  std::set<std::string> seen;
  for (const auto& [id, images] : identities) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("build_gallery: duplicate identity " + id);
    }
    GalleryEntry entry;
    entry.identity_id = id;
    std::vector<Tensor> refs(images.begin(),
                             images.begin() + std::min<std::size_t>(images.size(),
                                                                    refs_per_identity));
    if (refs.empty()) {
      throw std::invalid_argument("build_gallery: identity " + id + " has no images");
    }
    for (const FREncoder* enc : eval_encoders) {
      require_eval_encoder(*enc);
      entry.prototypes.emplace(enc->name(), prototype(*enc, refs, spec));
    }
    g.entries.push_back(std::move(entry));
  }
  return g;
}

double topk_retrieval(const std::vector<Tensor>& probe_images, const Gallery& gallery,
                      const std::string& true_id, int k, const FREncoder& eval_encoder,
                      const AlignerSpec& spec) {
  require_eval_encoder(eval_encoder);
  if (probe_images.empty()) {
    throw std::invalid_argument("topk_retrieval: empty probe set");
  }
  if (k < 1 || k > gallery.size()) {
    throw std::invalid_argument("topk_retrieval: k must lie in [1, gallery size]");
  }
  bool found = false;
  for (const GalleryEntry& e : gallery.entries) found |= e.identity_id == true_id;
  if (!found) {
    throw std::invalid_argument("topk_retrieval: true identity not in gallery: " + true_id);
  }

  int hits = 0;
  for (const Tensor& probe : probe_images) {
    std::vector<double> emb =
        eval_encoder.embed(align(probe, spec, eval_encoder.input_resolution()));
    std::vector<std::pair<double, const std::string*>> ranked;
    ranked.reserve(gallery.entries.size());
    for (const GalleryEntry& e : gallery.entries) {
      auto it = e.prototypes.find(eval_encoder.name());
      if (it == e.prototypes.end()) {
        throw std::invalid_argument("topk_retrieval: gallery lacks prototypes for encoder " +
                                    eval_encoder.name());
      }
      ranked.emplace_back(nn::dot(emb, it->second.e), &e.identity_id);
    }
    // Similarity descending; ties by ascending identity id (total order).
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return *a.second < *b.second;
    });
    for (int i = 0; i < k; ++i) {
      if (*ranked[i].second == true_id) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probe_images.size());
}

BudgetReport budget_report(const std::vector<Tensor>& x0, const std::vector<Tensor>& x_prime) {
  if (x0.size() != x_prime.size()) {
    throw std::invalid_argument("budget_report: paired lists differ in length");
  }
  if (x0.empty()) {
    throw std::invalid_argument("budget_report: empty lists");
  }
  BudgetReport r;
  double psum = 0.0, ssum = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    double p = psnr(x0[i], x_prime[i]);
    double s = ssim(x0[i], x_prime[i]);
    r.psnr_per_pair.push_back(p);
    r.ssim_per_pair.push_back(s);
    psum += p;
    ssum += s;
  }
  r.psnr_mean = psum / x0.size();  // stays +inf if any pair is identical
  r.ssim_mean = ssum / x0.size();
  return r;
}

}  // namespace iddm
