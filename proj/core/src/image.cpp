#include "pairint/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "pairint/error.hpp"

namespace pairint {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

RgbImage::RgbImage(int w, int h, Rgb fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
  }
}

void RgbImage::set(int x, int y, Rgb c) {
  if (!contains(x, y)) return;
  auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

Rgb RgbImage::get(int x, int y) const {
  const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
  return {p[0], p[1], p[2]};
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

GrayImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw Error(ErrorCode::Io, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::Io, "cannot decode PNG " + path.string() + ": " + msg);
  }
  GrayImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buffer[i] / 255.0f;
  return out;
}

// Skips whitespace and '#' comments between PNM header tokens.
int read_pnm_int(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  const bool gray = magic[0] == 'P' && magic[1] == '5';
  const bool color = magic[0] == 'P' && magic[1] == '6';
  if (!gray && !color) throw Error(ErrorCode::Io, "unsupported PNM variant in " + path.string());
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::Io, "bad PNM header in " + path.string());
  }
  in.get();
  const int channels = color ? 3 : 1;
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorCode::Io, "truncated PNM " + path.string());
  }
  auto sample = [&](std::size_t i) -> float {
    unsigned v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    return static_cast<float>(v) / static_cast<float>(maxval);
  };
  GrayImage out(w, h);
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    if (channels == 1) {
      out.data[p] = sample(p);
    } else {
      out.data[p] = 0.299f * sample(3 * p) + 0.587f * sample(3 * p + 1) + 0.114f * sample(3 * p + 2);
    }
  }
  return out;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

void write_png_raw(const std::filesystem::path& path, int w, int h, std::uint32_t format,
                   const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, nullptr) == 0) {
    throw Error(ErrorCode::Io, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

GrayImage read_gray_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFrameImage, path.string());
  const std::string ext = lower_extension(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pgm(path);
  return read_png(path);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_png_raw(path, img.width, img.height, PNG_FORMAT_GRAY, bytes.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  write_png_raw(path, img.width, img.height, PNG_FORMAT_RGB, img.data.data());
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (float v : img.data) out.put(static_cast<char>(to_byte(v)));
}

RgbImage to_rgb(const GrayImage& img) {
  RgbImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const std::uint8_t b = to_byte(img.data[i]);
    out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = b;
  }
  return out;
}

}  // namespace pairint
