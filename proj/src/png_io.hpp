#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace clude::detail {

/// Decoded PNG with interleaved samples (palette and low bit depths expanded to 8 bit).
struct PngImage {
  std::size_t width = 0, height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& img);

}  // namespace clude::detail
