#pragma once

#include <string>

#include "geod/tensor.hpp"

namespace geod {

// Images in memory are [H,W,3] (or [H,W,1]) tensors with values in [0,1].
// PNG output is pinned to 8-bit RGB, compression level 6, filter NONE so
// identical tensors always produce identical bytes.
void write_png(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);  // always returns [H,W,3]

// Raw row-major little-endian float32, no header (dimensions live in the
// dataset manifest).
void write_f32(const std::string& path, const Tensor& map);
Tensor read_f32(const std::string& path, int height, int width);

// Unit vectors in [-1,1] packed to [0,1] for PNG storage and back.
Tensor encode_normal_map(const Tensor& normals);  // [H,W,3] -> [H,W,3]
Tensor decode_normal_map(const Tensor& packed);

}  // namespace geod
