#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iddm/tensor.hpp"

namespace iddm {

using IdentityImages = std::pair<std::string, std::vector<Tensor>>;

struct SyntheticDataOptions {
  int n_ids = 6;
  int imgs_per_id = 16;
  int height = 32;
  int width = 32;
  int max_retries = 3;
  // When true, a probe encoder is trained on the fresh set and the
  // within/cross identity similarity gap must come out positive.
  bool verify_separability = true;
};

// Procedural face-like identities: per-identity skin/hair/background palette
// and geometry with per-image jitter. Deterministic given the seed; retries
// with a derived seed when the separability check fails, then errors.
std::vector<IdentityImages> make_synthetic_identities(const SyntheticDataOptions& opt,
                                                      std::uint64_t seed);

// data/<identity>/<index>.png layout.
void write_dataset(const std::vector<IdentityImages>& data, const std::string& dir);
std::vector<IdentityImages> load_dataset(const std::string& dir);

}  // namespace iddm
