#include "iddm/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace iddm {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void write_chunk(std::vector<unsigned char>& out, const char type[4],
                 const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = ::crc32(0L, out.data() + start, static_cast<uInt>(4 + data.size()));
  put_u32(out, crc);
}

constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

void write_png(const Tensor& img, const std::string& path) {
  if (img.channels != 3) {
    throw std::invalid_argument("write_png: expected a 3-channel image");
  }
  const int h = img.height, w = img.width;

  // Filter 0 (none) on every scanline.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * w));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK) {
    throw std::runtime_error("write_png: deflate failed");
  }
  compressed.resize(bound);

  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::vector<unsigned char> out(kSignature, kSignature + 8);
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("write_png: cannot open " + path);
  }
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) {
    throw std::runtime_error("write_png: write failed: " + path);
  }
}

Tensor read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("read_png: cannot open " + path);
  }
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0) {
    throw std::runtime_error("read_png: not a PNG file: " + path);
  }

  int w = 0, h = 0;
  std::vector<unsigned char> idat;
  std::size_t pos = 8;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 12 <= buf.size() && !saw_iend) {
    std::uint32_t len = get_u32(&buf[pos]);
    if (pos + 12 + len > buf.size()) {
      throw std::runtime_error("read_png: truncated chunk in " + path);
    }
    const unsigned char* type = &buf[pos + 4];
    const unsigned char* data = &buf[pos + 8];
    std::uint32_t want_crc = get_u32(&buf[pos + 8 + len]);
    std::uint32_t got_crc = ::crc32(0L, type, static_cast<uInt>(4 + len));
    if (want_crc != got_crc) {
      throw std::runtime_error("read_png: chunk checksum mismatch in " + path);
    }
    std::string t(reinterpret_cast<const char*>(type), 4);
    if (t == "IHDR") {
      w = static_cast<int>(get_u32(data));
      h = static_cast<int>(get_u32(data + 4));
      if (data[8] != 8 || data[9] != 2 || data[10] != 0 || data[11] != 0 || data[12] != 0) {
        throw std::runtime_error("read_png: only 8-bit non-interlaced RGB is supported: " + path);
      }
      saw_ihdr = true;
    } else if (t == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (t == "IEND") {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || w <= 0 || h <= 0) {
    throw std::runtime_error("read_png: malformed file: " + path);
  }

  const std::size_t stride = 1 + static_cast<std::size_t>(w) * 3;
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * stride);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw std::runtime_error("read_png: inflate failed: " + path);
  }

  // Undo per-scanline filters.
  std::vector<unsigned char> pix(static_cast<std::size_t>(h) * w * 3);
  const int bpp = 3;
  for (int y = 0; y < h; ++y) {
    unsigned char filter = raw[y * stride];
    const unsigned char* src = &raw[y * stride + 1];
    unsigned char* dst = &pix[static_cast<std::size_t>(y) * w * 3];
    const unsigned char* up = y > 0 ? &pix[static_cast<std::size_t>(y - 1) * w * 3] : nullptr;
    for (int i = 0; i < w * 3; ++i) {
      int a = i >= bpp ? dst[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= bpp) ? up[i - bpp] : 0;
      int x = src[i];
      switch (filter) {
        case 0: break;
        case 1: x += a; break;
        case 2: x += b; break;
        case 3: x += (a + b) / 2; break;
        case 4: {
          int p = a + b - c;
          int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default:
          throw std::runtime_error("read_png: unknown filter type in " + path);
      }
      dst[i] = static_cast<unsigned char>(x & 0xff);
    }
  }

  Tensor img(h, w, 3);
  for (std::size_t i = 0; i < pix.size(); ++i) {
    img.data[i] = static_cast<double>(pix[i]) / 255.0;
  }
  return img;
}

}  // namespace iddm
