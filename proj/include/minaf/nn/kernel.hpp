#pragma once

#include <cstddef>
#include <vector>

namespace minaf::nn {

/// Weight of a linear map stored transposed (in x out_pad) with the output
/// dimension padded to a multiple of 16, plus a padded bias.
template <typename T>
struct PackedAffine {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t out_pad = 0;
  std::vector<T> wt;    // in * out_pad
  std::vector<T> bias;  // out_pad

  /// w is (out x in) row-major, b has out entries (may be null for zero bias).
  static PackedAffine pack(const T* w, const T* b, std::size_t out, std::size_t in);
};

/// y[r][j] = bias[j] + sum_k x[r][k] * w[j][k], each output accumulated with
/// fused multiply-adds in increasing k. Every row is computed independently
/// with the same operation sequence, so results do not depend on how many
/// rows are evaluated together. x is rows x in, y is rows x out (row-major).
template <typename T>
void affine_forward(const PackedAffine<T>& p, const T* x, std::size_t rows, T* y);

}  // namespace minaf::nn
