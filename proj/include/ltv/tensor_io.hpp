#pragma once

#include <string>

#include "ltv/tensor.hpp"

namespace ltv {

// Binary tensor format "LTVT": magic bytes 'LTVT', u8 version=1, u8 rank,
// little-endian u32 extents, little-endian f64 payload.
void write_ltvt(const std::string& path, const Tensor& t);
Tensor read_ltvt(const std::string& path);

// 16-bit binary PGM (P5, maxval 65535, most significant byte first) with
// linear [0,1] scaling. Values outside [0,1] are clamped on write.
void write_pgm16(const std::string& path, const Tensor& image);
Tensor read_pgm16(const std::string& path);

}  // namespace ltv
