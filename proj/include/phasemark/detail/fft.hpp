#pragma once

#include "phasemark/types.hpp"

namespace phasemark::fft {

/// In-place 2D DFT, unnormalized forward convention (sum without 1/N).
void forward2d(ArrayXXcd& inout);

/// In-place 2D inverse DFT scaled by 1/N, so inverse(forward(x)) == x.
void inverse2d(ArrayXXcd& inout);

} // namespace phasemark::fft
