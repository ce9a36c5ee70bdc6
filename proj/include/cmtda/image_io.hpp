#pragma once

#include <string>

#include "cmtda/tensor.hpp"

namespace cmtda {

// 8-bit RGB PNG. Values are quantized with round(v*255) on write and mapped
// back to v/255 on read.
void write_png_rgb(const std::string& path, const Tensor& image);
Tensor read_png_rgb(const std::string& path);

// Single-channel 8-bit PNG carrying class ids.
void write_png_labels(const std::string& path, const LabelMap& labels);
LabelMap read_png_labels(const std::string& path);

// Single-channel visualization of a [0,1] map.
void write_png_gray(const std::string& path, const Tensor& map1);

}  // namespace cmtda
