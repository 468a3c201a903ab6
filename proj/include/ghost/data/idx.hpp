#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ghost/data/image.hpp"

namespace ghost::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Raw IDX file: magic, big-endian dimension sizes and the unsigned-byte payload.
/// gzip-compressed files are read transparently.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxFile read_idx(const std::filesystem::path& path);

/// Loads an image file (magic 0x803) and, when given, its label file (0x801).
/// Pixel value k maps to exactly k/255.
ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels = {},
                  Split split = Split::Train);

/// Resize every image to target×target (bilinear, half-pixel centres), then
/// binarize with pixel >= threshold -> 1.
ImageSet preprocess(const ImageSet& set, std::size_t target, double threshold = 0.5);

Image resize_bilinear(const Image& img, std::size_t width, std::size_t height);

/// P5 with maxval 255; pixels are rounded from [0,1].
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

/// Tiles images row-major into a grid with `gap` background pixels between tiles.
Image montage(const std::vector<std::vector<Image>>& rows, std::size_t gap = 1, double background = 0.5);

}  // namespace ghost::data
