#include "leafseg/image.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace leafseg {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
      offset_(offset) {}

RasterImage make_image(int width, int height, int channels, std::uint8_t fill) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("make_image: dimensions must be at least 1x1");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("make_image: channels must be 1 or 3");
  RasterImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(img.sample_count()), fill);
  return img;
}

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Cursor over the raw byte buffer; keeps the offset for error reporting.
class ByteScanner {
 public:
  explicit ByteScanner(std::span<const std::uint8_t> bytes, std::size_t start = 0)
      : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }
  bool eof() const { return pos_ >= bytes_.size(); }

  // Whitespace and '#' comments between header tokens.
  void skip_header_space() {
    while (!eof()) {
      const std::uint8_t c = bytes_[pos_];
      if (c == '#') {
        while (!eof() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_header_int(const char* what) {
    skip_header_space();
    if (eof()) throw ParseError(std::string("unexpected end of data reading ") + what, pos_);
    if (!std::isdigit(bytes_[pos_]))
      throw ParseError(std::string("expected digits for ") + what, pos_);
    long value = 0;
    while (!eof() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000L)
        throw ParseError(std::string("value out of range for ") + what, pos_);
      ++pos_;
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the maxval from a binary payload.
  void expect_single_space() {
    if (eof() || !std::isspace(bytes_[pos_]))
      throw ParseError("expected whitespace before binary payload", pos_);
    ++pos_;
  }

  std::uint8_t read_raw_byte() {
    if (eof()) throw ParseError("truncated binary payload", pos_);
    return bytes_[pos_++];
  }

  int read_ascii_sample() {
    skip_header_space();
    if (eof()) throw ParseError("truncated sample data", pos_);
    if (!std::isdigit(bytes_[pos_]))
      throw ParseError("expected numeric sample", pos_);
    const std::size_t start = pos_;
    int value = 0;
    while (!eof() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 255) throw ParseError("sample exceeds 255", start);
      ++pos_;
    }
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw ParseError("not a portable pixmap/graymap (missing 'P' magic)", 0);
  const char kind = static_cast<char>(bytes[1]);
  bool ascii = false;
  int channels = 0;
  switch (kind) {
    case '2': ascii = true;  channels = 1; break;
    case '3': ascii = true;  channels = 3; break;
    case '5': ascii = false; channels = 1; break;
    case '6': ascii = false; channels = 3; break;
    default:
      throw ParseError(std::string("unsupported magic 'P") + kind + "'", 1);
  }
  ByteScanner body(bytes, 2);
  const int width = body.read_header_int("width");
  const int height = body.read_header_int("height");
  if (width < 1 || height < 1)
    throw ParseError("dimensions must be at least 1x1", body.pos());
  body.skip_header_space();
  const std::size_t maxval_pos = body.pos();
  const int maxval = body.read_header_int("maxval");
  if (maxval != 255)
    throw ParseError("maxval must be 255, got " + std::to_string(maxval), maxval_pos);

  RasterImage img = make_image(width, height, channels);
  const std::size_t n = img.data.size();
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i)
      img.data[i] = static_cast<std::uint8_t>(body.read_ascii_sample());
  } else {
    body.expect_single_space();
    for (std::size_t i = 0; i < n; ++i) img.data[i] = body.read_raw_byte();
  }
  return img;
}

std::vector<std::uint8_t> encode_image(const RasterImage& img, PnmEncoding enc) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("encode_image: channels must be 1 or 3");
  if (img.width < 1 || img.height < 1)
    throw std::invalid_argument("encode_image: empty image");
  if (img.data.size() != static_cast<std::size_t>(img.sample_count()))
    throw std::invalid_argument("encode_image: data length does not match dimensions");

  const bool ascii = enc == PnmEncoding::ascii;
  const char magic = img.channels == 1 ? (ascii ? '2' : '5') : (ascii ? '3' : '6');
  std::string header = "P";
  header += magic;
  header += '\n';
  header += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";

  std::vector<std::uint8_t> out(header.begin(), header.end());
  if (ascii) {
    std::string body;
    const int per_row = img.width * img.channels;
    for (int y = 0; y < img.height; ++y) {
      for (int i = 0; i < per_row; ++i) {
        if (i) body += ' ';
        body += std::to_string(img.data[static_cast<std::size_t>(y * per_row + i)]);
      }
      body += '\n';
    }
    out.insert(out.end(), body.begin(), body.end());
  } else {
    out.insert(out.end(), img.data.begin(), img.data.end());
  }
  return out;
}

RasterImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const ParseError& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void save_image(const RasterImage& img, const std::filesystem::path& path,
                PnmEncoding enc) {
  const std::vector<std::uint8_t> bytes = encode_image(img, enc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels == 1) return img;
  RasterImage gray = make_image(img.width, img.height, 1);
  const std::int64_t n = img.pixel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = img.data[static_cast<std::size_t>(3 * i)];
    const double g = img.data[static_cast<std::size_t>(3 * i + 1)];
    const double b = img.data[static_cast<std::size_t>(3 * i + 2)];
    int v = round_half_up(0.2989 * r + 0.5870 * g + 0.1140 * b);
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    gray.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return gray;
}

NormalizedPlane normalize(const RasterImage& img) {
  NormalizedPlane plane;
  plane.width = img.width;
  plane.height = img.height;
  plane.channels = img.channels;
  plane.values.resize(static_cast<Eigen::Index>(img.data.size()));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    plane.values[static_cast<Eigen::Index>(i)] = img.data[i] / 255.0;
  return plane;
}

std::uint8_t quantize_output(double y) {
  if (!std::isfinite(y))
    throw std::domain_error("quantize_output: non-finite value (diverged network?)");
  if (y < 0.0) y = 0.0;
  if (y > 1.0) y = 1.0;
  return static_cast<std::uint8_t>(round_half_up(255.0 * y));
}

RasterImage reconstruct(std::span<const std::uint8_t> stream, int width, int height,
                        int channels) {
  RasterImage img = make_image(width, height, channels);
  if (stream.size() != img.data.size())
    throw std::invalid_argument(
        "reconstruct: expected " + std::to_string(img.data.size()) +
        " samples, got " + std::to_string(stream.size()));
  std::copy(stream.begin(), stream.end(), img.data.begin());
  return img;
}

RasterImage reconstruct(const NormalizedPlane& plane) {
  RasterImage img = make_image(plane.width, plane.height, plane.channels);
  if (plane.values.size() != static_cast<Eigen::Index>(img.data.size()))
    throw std::invalid_argument("reconstruct: value count does not match dimensions");
  for (Eigen::Index i = 0; i < plane.values.size(); ++i)
    img.data[static_cast<std::size_t>(i)] = quantize_output(plane.values[i]);
  return img;
}

}  // namespace leafseg
