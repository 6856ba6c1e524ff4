#include "png_io.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "deform.hpp"

namespace moco {

namespace {

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0xffffffffu) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

uint32_t adler32(const std::vector<uint8_t>& data) {
  uint32_t a = 1, b = 0;
  for (uint8_t byte : data) {
    a = (a + byte) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& data) {
  put_be32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = ~crc32(out.data() + start, out.size() - start);
  put_be32(out, crc);
}

// zlib stream made of stored (uncompressed) deflate blocks.
std::vector<uint8_t> zlib_stored(const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  do {
    const size_t chunk = std::min<size_t>(65535, raw.size() - pos);
    const bool final = pos + chunk == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<uint8_t>(chunk & 0xff));
    z.push_back(static_cast<uint8_t>(chunk >> 8));
    z.push_back(static_cast<uint8_t>(~chunk & 0xff));
    z.push_back(static_cast<uint8_t>((~chunk >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + chunk);
    pos += chunk;
  } while (pos < raw.size());
  put_be32(z, adler32(raw));
  return z;
}

void write_png(const std::filesystem::path& path, const std::vector<uint8_t>& pixels, int width,
               int height, int channels) {
  if (pixels.size() != static_cast<size_t>(width) * height * channels) {
    throw std::invalid_argument("png: pixel buffer size mismatch");
  }
  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);
  ihdr.push_back(channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);

  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * channels));
  for (int j = 0; j < height; ++j) {
    raw.push_back(0);  // filter: none
    const size_t row = static_cast<size_t>(j) * width * channels;
    raw.insert(raw.end(), pixels.begin() + row, pixels.begin() + row + width * channels);
  }
  append_chunk(out, "IDAT", zlib_stored(raw));
  append_chunk(out, "IEND", {});

  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write png: " + path.string());
  const size_t written = std::fwrite(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (written != out.size()) throw std::runtime_error("short png write: " + path.string());
}

uint8_t to_byte(double v) {
  if (v <= 0) return 0;
  if (v >= 1) return 255;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

void hsv_to_rgb(double h, double s, double v, uint8_t rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const double m = v - c;
  rgb[0] = to_byte(r + m);
  rgb[1] = to_byte(g + m);
  rgb[2] = to_byte(b + m);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const std::vector<uint8_t>& pixels,
                    int width, int height) {
  write_png(path, pixels, width, height, 1);
}

void write_png_rgb(const std::filesystem::path& path, const std::vector<uint8_t>& rgb, int width,
                   int height) {
  write_png(path, rgb, width, height, 3);
}

void export_image_png(const std::filesystem::path& path, const Image& im, double window_max) {
  const int n = im.grid.n;
  std::vector<uint8_t> pix(static_cast<size_t>(n) * n);
  const double scale = window_max > 0 ? 1.0 / window_max : 0.0;
  for (size_t i = 0; i < pix.size(); ++i) pix[i] = to_byte(im.v[i] * scale);
  write_png_gray(path, pix, n, n);
}

void export_deformation_png(const std::filesystem::path& path, const DeformationField& field,
                            double max_disp) {
  const int n = field.grid.n;
  if (max_disp <= 0) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const double dx = field.px[static_cast<size_t>(j) * n + k] - field.grid.x(k);
        const double dy = field.py[static_cast<size_t>(j) * n + k] - field.grid.y(j);
        max_disp = std::max(max_disp, std::hypot(dx, dy));
      }
    }
    if (max_disp <= 0) max_disp = 1.0;
  }
  std::vector<uint8_t> rgb(static_cast<size_t>(n) * n * 3);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      const size_t i = static_cast<size_t>(j) * n + k;
      const double dx = field.px[i] - field.grid.x(k);
      const double dy = field.py[i] - field.grid.y(j);
      const double mag = std::hypot(dx, dy) / max_disp;
      const double hue = std::atan2(dy, dx) / (2.0 * 3.141592653589793) + 0.5;
      hsv_to_rgb(hue, 1.0, std::min(1.0, mag), &rgb[3 * i]);
    }
  }
  write_png_rgb(path, rgb, n, n);
}

}  // namespace moco
