#ifndef NSG_DATA_IMAGE_IO_HPP
#define NSG_DATA_IMAGE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nsg/core/tensor.hpp"

namespace nsg {

/// 8-bit image, interleaved row-major (HWC). channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(y * width + x) * channels + c]; }
};

ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& img);

/// u8 [0,255] -> float CHW in [-1,1].
Tensor<float> image_to_tensor(const ImageU8& img);

/// float CHW, clamped to [-1,1] -> u8 image.
ImageU8 tensor_to_image(const Tensor<float>& t);

}  // namespace nsg

#endif
