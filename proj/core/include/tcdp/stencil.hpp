#pragma once

#include "tcdp/grid.hpp"

namespace tcdp {

// Un-normalized 3x3 Sobel responses in the +x-right / +y-down convention:
// a ramp v = x answers 8 in the x channel. Border pixels and pixels with any
// invalid 3x3 neighbor are invalid.
//
// The scalar form yields channels [gx, gy]; the vector form yields
// [gx_0, gy_0, gx_1, gy_1, ...] for the input's channels in order.
VectorGrid sobel_gradients(const ScalarGrid& g);
VectorGrid sobel_gradients(const VectorGrid& g);

// 5-point Laplacian: sum of the 4-neighbors minus 4 * center. Border pixels
// and pixels with any invalid contributing neighbor are invalid.
ScalarGrid laplacian(const ScalarGrid& g);
VectorGrid laplacian(const VectorGrid& g);

// Binary dilation with a square structuring element of the given Chebyshev
// radius (radius 0 is the identity). Nonzero values count as set; invalid
// pixels count as unset. The result is a fully-valid 0/1 grid.
ScalarGrid dilate(const ScalarGrid& g, int radius);

// One 2x average-pooling step over non-overlapping 2x2 blocks (floor
// dimensions; a trailing odd row/column is dropped). A pooled pixel is valid
// only when all four contributors are valid.
ScalarGrid downsample2(const ScalarGrid& g);
VectorGrid downsample2(const VectorGrid& g);

}  // namespace tcdp
