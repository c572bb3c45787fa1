#include "funginet/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace funginet {

ImageBuffer make_image(int height, int width, std::uint8_t fill) {
  if (height < 1 || width < 1)
    throw std::invalid_argument("make_image: extents must be positive");
  ImageBuffer img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height) * width * 3, fill);
  return img;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w) {
  if (img.height < 1 || img.width < 1)
    throw std::invalid_argument("resize_bilinear: empty input image");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_bilinear: output extents must be positive");

  ImageBuffer out = make_image(out_h, out_w);
  const double scale_y = static_cast<double>(img.height) / out_h;
  const double scale_x = static_cast<double>(img.width) / out_w;

  for (int oy = 0; oy < out_h; ++oy) {
    double sy = (oy + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    int y0 = static_cast<int>(std::floor(sy));
    int y1 = std::min(y0 + 1, img.height - 1);
    double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double sx = (ox + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
      int x0 = static_cast<int>(std::floor(sx));
      int x1 = std::min(x0 + 1, img.width - 1);
      double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        double v = (1.0 - fy) * top + fy * bottom;
        long r = std::lround(v);
        out.at(oy, ox, c) = static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
      }
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& img, int out_h, int out_w, CropMode mode, Rng* rng) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("crop: extents must be positive");
  if (out_h > img.height || out_w > img.width) {
    throw std::invalid_argument("crop: requested " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " from a " + std::to_string(img.height) +
                                "x" + std::to_string(img.width) + " image");
  }
  int off_y, off_x;
  if (mode == CropMode::center) {
    off_y = (img.height - out_h) / 2;
    off_x = (img.width - out_w) / 2;
  } else {
    if (!rng) throw std::invalid_argument("crop: random mode requires an rng");
    off_y = static_cast<int>(rng->below(static_cast<std::size_t>(img.height - out_h) + 1));
    off_x = static_cast<int>(rng->below(static_cast<std::size_t>(img.width - out_w) + 1));
  }
  ImageBuffer out = make_image(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const std::uint8_t* src = &img.pixels[((y + off_y) * static_cast<std::size_t>(img.width) +
                                           off_x) * 3];
    std::uint8_t* dst = &out.pixels[y * static_cast<std::size_t>(out_w) * 3];
    std::copy(src, src + static_cast<std::size_t>(out_w) * 3, dst);
  }
  return out;
}

ImageBuffer hflip(const ImageBuffer& img) {
  ImageBuffer out = make_image(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

Tensor normalize(const ImageBuffer& img, const NormalizationConstants& c) {
  for (double s : c.stddev) {
    if (!(s > 0.0)) throw std::invalid_argument("normalize: std must be positive");
  }
  std::size_t h = static_cast<std::size_t>(img.height);
  std::size_t w = static_cast<std::size_t>(img.width);
  Tensor t = Tensor::zeros({3, h, w}, DType::f32);
  float* out = t.f32();
  for (int ch = 0; ch < 3; ++ch) {
    const float mean = static_cast<float>(c.mean[static_cast<std::size_t>(ch)]);
    const float inv_std =
        static_cast<float>(1.0 / c.stddev[static_cast<std::size_t>(ch)]);
    float* plane = out + static_cast<std::size_t>(ch) * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        float v = static_cast<float>(img.pixels[(y * w + x) * 3 + static_cast<std::size_t>(ch)]) /
                  255.0f;
        plane[y * w + x] = (v - mean) * inv_std;
      }
    }
  }
  return t;
}

Tensor preprocess_train(const ImageBuffer& img, Rng& rng, const PreprocessOptions& opts) {
  ImageBuffer stage = resize_bilinear(img, opts.resize, opts.resize);
  stage = crop(stage, opts.crop, opts.crop, CropMode::random, &rng);
  if (rng.bernoulli(opts.flip_prob)) stage = hflip(stage);
  return normalize(stage, opts.norm);
}

Tensor preprocess_eval(const ImageBuffer& img, const PreprocessOptions& opts) {
  ImageBuffer stage = resize_bilinear(img, opts.resize, opts.resize);
  stage = crop(stage, opts.crop, opts.crop, CropMode::center);
  return normalize(stage, opts.norm);
}

}  // namespace funginet
