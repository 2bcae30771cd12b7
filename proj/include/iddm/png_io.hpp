#pragma once

#include <string>

#include "iddm/tensor.hpp"

namespace iddm {

// 8-bit RGB PNG. Values are quantized with round(v * 255), so the per-channel
// round-trip error is at most 1/510.
void write_png(const Tensor& img, const std::string& path);

// Reads 8-bit RGB (color type 2) PNGs; chunk CRCs are verified.
Tensor read_png(const std::string& path);

}  // namespace iddm
