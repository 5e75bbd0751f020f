#pragma once

// Netpbm image files: binary/ASCII graymap (P5/P2) and binary pixmap (P6).

#include "primfit/imageproc.hpp"

#include <Eigen/Core>

#include <string>

namespace primfit {

/// Loads a graymap and thresholds at 128.
Mask read_mask(const std::string& path);
/// Writes 0/255.
void write_mask(const std::string& path, const Mask& mask);

/// Writes round(255 * clamp(v, 0, 1)).
void write_gray(const std::string& path, const Eigen::MatrixXd& image);

RgbImage read_rgb(const std::string& path);
void write_rgb(const std::string& path, const RgbImage& image);

}  // namespace primfit
