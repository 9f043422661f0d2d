#pragma once

#include "stmrecon/types.hpp"

#include <vector>

namespace stmrecon {

// In-place unnormalized DFT over the leading axes of a row-major array whose
// trailing `batch` elements are contiguous and transformed independently.
// sign = -1 is the forward transform.
void fft_nd(cx *data, const std::vector<Index> &dims, Index batch, int sign);

// Unitary DFT between image space (x = 0..N-1) and centered k-space
// (index i holds k = i - floor(N/2)), applied over the spatial axes of a
// (x, y, z, batch) array.
void fft_centered(cx *data, const Grid &grid, Index batch);
void ifft_centered(cx *data, const Grid &grid, Index batch);

// Unitary DFT along the contiguous trailing axis of a rows x len array.
void fft_rows(cx *data, Index rows, Index len, int sign);

// Centered frequency of index i on an axis of length n.
inline Index centered_freq(Index i, Index n) { return i - n / 2; }

} // namespace stmrecon
