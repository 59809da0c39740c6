#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace leafseg {

// Raised by the pixmap decoder and the combination-name parser. `offset` is
// the byte (or character) position at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// 8-bit raster, 1 or 3 channels, row-major and channel-interleaved.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int x, int y, int c = 0) const {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::int64_t pixel_count() const { return std::int64_t{width} * height; }
  std::int64_t sample_count() const { return pixel_count() * channels; }

  bool operator==(const RasterImage&) const = default;
};

RasterImage make_image(int width, int height, int channels, std::uint8_t fill = 0);

// Real-valued companion of RasterImage; every value lies in [0, 1]. Same
// row-major, channel-interleaved layout.
struct NormalizedPlane {
  int width = 0;
  int height = 0;
  int channels = 1;
  Eigen::ArrayXd values;
};

enum class PnmEncoding { binary, ascii };

// Portable graymap/pixmap I/O, restricted to maxval 255. ASCII (P2/P3) and
// binary (P5/P6) variants are accepted; '#' comments in headers are skipped.
RasterImage decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_image(const RasterImage& img,
                                       PnmEncoding enc = PnmEncoding::binary);
RasterImage load_image(const std::filesystem::path& path);
void save_image(const RasterImage& img, const std::filesystem::path& path,
                PnmEncoding enc = PnmEncoding::binary);

// gray = round(0.2989 R + 0.5870 G + 0.1140 B), half-up. Single-channel
// input passes through unchanged.
RasterImage to_grayscale(const RasterImage& img);

// Every intensity divided by 255.
NormalizedPlane normalize(const RasterImage& img);

// Clamps y into [0, 1], then rounds 255*y half-up. Non-finite input signals
// a diverged network and throws.
std::uint8_t quantize_output(double y);

// Packs an ordered sample stream back into a raster; the stream length must
// equal width * height * channels.
RasterImage reconstruct(std::span<const std::uint8_t> stream, int width, int height,
                        int channels);

// Quantizes each value, then packs: the bridge from network output back to
// an 8-bit image.
RasterImage reconstruct(const NormalizedPlane& plane);

}  // namespace leafseg
