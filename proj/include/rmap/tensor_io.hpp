#pragma once

#include <string>

#include "rmap/tensor.hpp"

// On-disk formats.
//
// Tensor file (.rmt): magic "RMT1", then little-endian uint32 rank and one
// uint32 extent per axis, then raw little-endian float32 data in row-major
// order. Readers reject anything whose magic does not match.
//
// Grayscale export (.pgm): binary P5, maxval 255, pixel = round(255 *
// clamp(v, 0, 1)).

namespace rmap::io {

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Exports one HxW plane. `plane` indexes the leading axis of a rank-3 tensor;
// rank-2 tensors take plane 0 only.
void write_pgm(const std::string& path, const Tensor& t, std::int64_t plane);

// Whole-file helpers.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace rmap::io
