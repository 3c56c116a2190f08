// Image file I/O: 8-bit binary PGM (P5) always; 8-bit gray/RGB PNG when built
// with libpng. Pixel values are normalized to [0,1], stored as CHW planes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blindpaint/common.hpp"
#include "blindpaint/tensor.hpp"

namespace blindpaint::io {

struct Image {
  std::int64_t h = 0, w = 0, c = 1;
  std::vector<float> data;  // c planes of h*w values in [0,1]
};

bool png_supported();

// Dispatches on the file contents (P5 header or PNG signature).
Image read_image(const std::string& path);
Image read_pgm(const std::string& path);

// Writes by extension: .pgm needs c==1; .png allows c==1 or c==3.
void write_image(const std::string& path, const Image& img);
void write_pgm(const std::string& path, const Image& img);

Tensor image_to_tensor(const Image& img);        // (1,c,h,w)
Image tensor_to_image(const Tensor& t);          // from (1,c,h,w)
Tensor channel_plane(const Image& img, std::int64_t c);  // (1,1,h,w)

// Pads bottom/right by mirror reflection so both spatial dims become
// multiples of `multiple`; crop_to undoes it.
Tensor reflect_pad_to_multiple(const Tensor& t, std::int64_t multiple);
Tensor crop_to(const Tensor& t, std::int64_t h, std::int64_t w);

}  // namespace blindpaint::io
