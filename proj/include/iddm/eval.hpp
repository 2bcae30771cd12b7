#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iddm/fr.hpp"
#include "iddm/quality.hpp"
#include "iddm/tensor.hpp"

namespace iddm {

// Face-detection predicate. The desk-scale oracle treats any non-degenerate
// synthetic face as detected; a real detector plugs in through the same
// signature.
using FaceDetector = std::function<bool(const Tensor&)>;

// Variance-threshold heuristic: near-constant images fail detection.
FaceDetector toy_detector(double min_variance = 1e-4);

// Fraction of images the detector accepts. Throws on an empty list.
double fsr(const std::vector<Tensor>& images, const FaceDetector& detector);

// Mean linkability over detection-successful images against a clean-set
// prototype under an evaluation encoder. nullopt when nothing was detected,
// never a silent zero. Requires an "eval/" encoder, disjoint from the
// optimization ensemble.
std::optional<double> ism_metric(const std::vector<Tensor>& images, const FREncoder& eval_encoder,
                                 const IdentityPrototype& clean_prototype,
                                 const AlignerSpec& spec, const FaceDetector& detector);

// One gallery identity: per-evaluation-encoder prototypes keyed by encoder
// name.
struct GalleryEntry {
  std::string identity_id;
  std::map<std::string, IdentityPrototype> prototypes;
};

struct Gallery {
  std::vector<GalleryEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
};

// Builds a gallery from identity-grouped clean images (refs_per_identity
// images each) under the given evaluation encoders. Identity ids must be
// unique.
Gallery build_gallery(const std::vector<std::pair<std::string, std::vector<Tensor>>>& identities,
                      const std::vector<const FREncoder*>& eval_encoders, const AlignerSpec& spec,
                      int refs_per_identity = 4);

// Top-k untargeted retrieval success rate: per probe, rank gallery
// identities by similarity (descending, ties broken by ascending
// identity_id) and count success when true_id appears in the top k.
double topk_retrieval(const std::vector<Tensor>& probe_images, const Gallery& gallery,
                      const std::string& true_id, int k, const FREncoder& eval_encoder,
                      const AlignerSpec& spec);

struct BudgetReport {
  std::vector<double> psnr_per_pair;
  std::vector<double> ssim_per_pair;
  double psnr_mean = 0.0;  // +inf when any pair is identical (sentinel)
  double ssim_mean = 0.0;
};

// Per-pair and mean PSNR/SSIM between the original and protected sets.
BudgetReport budget_report(const std::vector<Tensor>& x0, const std::vector<Tensor>& x_prime);

// Guards the surrogate/evaluation namespace split.
void require_eval_encoder(const FREncoder& enc);
void require_disjoint_namespaces(const std::vector<const FREncoder*>& optimization,
                                 const std::vector<const FREncoder*>& evaluation);

}  // namespace iddm
