#pragma once

#include <string>

#include "phasemark/image.hpp"

namespace phasemark {

/// Load an 8- or 16-bit grayscale PGM (P5) or PNG file. Intensities are
/// rescaled linearly to [0, 1]; 16-bit precision is preserved in the
/// double field. Color or paletted files are rejected.
ImageGray load_image(const std::string& path);

/// Save as 8- or 16-bit grayscale, format chosen by extension (.pgm or
/// .png). Samples are round(intensity * (2^bit_depth - 1)), half up.
void save_image(const ImageGray& img, const std::string& path, int bit_depth = 8);

} // namespace phasemark
