#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "funginet/rng.hpp"
#include "funginet/tensor.hpp"

namespace funginet {

// Decoded 8-bit RGB image, row-major H x W x 3.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(y * width + x) * 3 + c]; }
};

ImageBuffer make_image(int height, int width, std::uint8_t fill = 0);

struct NormalizationConstants {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

// Non-aspect-preserving bilinear resample with half-pixel-center mapping
// src = (dst + 0.5) * scale - 0.5 and edge clamping; values rounded to the
// nearest 8-bit level. Resizing to the same size is the identity.
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w);

enum class CropMode { center, random };

// Center mode uses offsets (floor((H-out_h)/2), floor((W-out_w)/2)); random
// mode draws both offsets uniformly from [0, H-out_h] x [0, W-out_w].
ImageBuffer crop(const ImageBuffer& img, int out_h, int out_w, CropMode mode,
                 Rng* rng = nullptr);

ImageBuffer hflip(const ImageBuffer& img);

// (pixel/255 - mean) / std per channel; output (3,H,W) float32, RGB order.
Tensor normalize(const ImageBuffer& img, const NormalizationConstants& c = {});

struct PreprocessOptions {
  int resize = 256;
  int crop = 224;
  double flip_prob = 0.5;
  NormalizationConstants norm;
};

// resize -> random crop -> horizontal flip (p = flip_prob) -> normalize.
Tensor preprocess_train(const ImageBuffer& img, Rng& rng, const PreprocessOptions& opts = {});
// resize -> center crop -> normalize.
Tensor preprocess_eval(const ImageBuffer& img, const PreprocessOptions& opts = {});

}  // namespace funginet
