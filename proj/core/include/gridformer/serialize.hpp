#pragma once

#include <iosfwd>
#include <string>

#include "gridformer/tensor.hpp"

namespace gridformer {

// "GFT1" tensor container: magic, u32 rank, rank x u32 extents, u8 dtype tag
// (0 = f32, 1 = f64), then little-endian row-major scalars.

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);

// Throws FormatError when the stored dtype differs from T.
template <typename T>
Tensor<T> load_tensor(const std::string& path);

Dtype tensor_file_dtype(const std::string& path);

// Stream forms for embedding GFT1 records in container files; `where`
// prefixes error messages.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

template <typename T>
Tensor<T> read_tensor(std::istream& is, const std::string& where);

}  // namespace gridformer
