#include "blindpaint/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#if defined(BLINDPAINT_HAVE_PNG)
#include <png.h>
#endif

namespace blindpaint::io {

namespace {

float byte_to_unit(unsigned char b) { return static_cast<float>(b) / 255.0f; }

unsigned char unit_to_byte(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return static_cast<unsigned char>(std::lround(clamped * 255.0f));
}

// Skips whitespace and '#' comments in a PNM header.
int next_header_token(std::istream& is, std::string& tok) {
  tok.clear();
  int ch = is.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = is.get();
    } else if (std::isspace(ch)) {
      ch = is.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = is.get();
  }
  return tok.empty() ? EOF : 0;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::UnreadableImage, "cannot open " + path);
  std::string tok;
  if (next_header_token(is, tok) == EOF || tok != "P5") {
    throw Error(ErrorKind::UnreadableImage, path + " is not a binary PGM (P5)");
  }
  std::int64_t w = 0, h = 0, maxval = 0;
  try {
    if (next_header_token(is, tok) == EOF) throw std::invalid_argument("w");
    w = std::stoll(tok);
    if (next_header_token(is, tok) == EOF) throw std::invalid_argument("h");
    h = std::stoll(tok);
    if (next_header_token(is, tok) == EOF) throw std::invalid_argument("maxval");
    maxval = std::stoll(tok);
  } catch (const std::exception&) {
    throw Error(ErrorKind::UnreadableImage, path + " has a malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorKind::UnreadableImage, path + ": only 8-bit PGM is supported");
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw Error(ErrorKind::UnreadableImage, path + " is truncated");

  Image img;
  img.h = h;
  img.w = w;
  img.c = 1;
  img.data.resize(raw.size());
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.data[i] = static_cast<float>(raw[i]) * scale;
  }
  return img;
}

void write_pgm(const std::string& path, const Image& img) {
  if (img.c != 1) {
    throw Error(ErrorKind::InvalidArgument, "PGM output is grayscale; image has " +
                                                std::to_string(img.c) + " channels");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoError, "cannot write " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(img.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = unit_to_byte(img.data[i]);
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw Error(ErrorKind::IoError, "short write to " + path);
}

#if defined(BLINDPAINT_HAVE_PNG)

bool png_supported() { return true; }

namespace {

Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw Error(ErrorKind::UnreadableImage, "cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorKind::UnreadableImage, "libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorKind::UnreadableImage, path + " is not a readable PNG");
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // Normalize everything to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);

  const std::int64_t w = png_get_image_width(png, info);
  const std::int64_t h = png_get_image_height(png, info);
  const std::int64_t channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorKind::UnreadableImage,
                path + " decodes to " + std::to_string(channels) + " channels");
  }

  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y) rows[y] = raw.data() + y * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Image img;
  img.h = h;
  img.w = w;
  img.c = channels;
  img.data.resize(static_cast<std::size_t>(w * h * channels));
  // interleaved -> planes
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t ch = 0; ch < channels; ++ch) {
        img.data[static_cast<std::size_t>(ch * h * w + y * w + x)] =
            byte_to_unit(raw[static_cast<std::size_t>((y * w + x) * channels + ch)]);
      }
    }
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3) {
    throw Error(ErrorKind::InvalidArgument, "PNG output supports 1 or 3 channels");
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error(ErrorKind::IoError, "cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::IoError, "libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorKind::IoError, "libpng write failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.w * img.c));
  for (std::int64_t y = 0; y < img.h; ++y) {
    for (std::int64_t x = 0; x < img.w; ++x) {
      for (std::int64_t ch = 0; ch < img.c; ++ch) {
        row[static_cast<std::size_t>(x * img.c + ch)] =
            unit_to_byte(img.data[static_cast<std::size_t>(ch * img.h * img.w + y * img.w + x)]);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

#else

bool png_supported() { return false; }

#endif

Image read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error(ErrorKind::UnreadableImage, "cannot open " + path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), sizeof(sig));
  probe.close();
  if (sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
#if defined(BLINDPAINT_HAVE_PNG)
  static const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (std::memcmp(sig, kPngSig, 8) == 0) return read_png(path);
#endif
  throw Error(ErrorKind::UnreadableImage,
              path + " is neither a P5 PGM nor a supported PNG");
}

void write_image(const std::string& path, const Image& img) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".pgm") {
    write_pgm(path, img);
    return;
  }
#if defined(BLINDPAINT_HAVE_PNG)
  if (ext == ".png") {
    write_png(path, img);
    return;
  }
#endif
  throw Error(ErrorKind::InvalidArgument, "unsupported output format '" + ext + "'");
}

Tensor image_to_tensor(const Image& img) {
  Tensor t(1, img.c, img.h, img.w);
  std::copy(img.data.begin(), img.data.end(), t.data());
  return t;
}

Image tensor_to_image(const Tensor& t) {
  if (t.n() != 1) throw Error(ErrorKind::InvalidArgument, "expected a single-image tensor");
  Image img;
  img.h = t.h();
  img.w = t.w();
  img.c = t.c();
  img.data.assign(t.data(), t.data() + t.numel());
  return img;
}

Tensor channel_plane(const Image& img, std::int64_t c) {
  Tensor t(1, 1, img.h, img.w);
  const float* src = img.data.data() + c * img.h * img.w;
  std::copy(src, src + img.h * img.w, t.data());
  return t;
}

Tensor reflect_pad_to_multiple(const Tensor& t, std::int64_t multiple) {
  const std::int64_t h = t.h(), w = t.w();
  const std::int64_t ph = (multiple - h % multiple) % multiple;
  const std::int64_t pw = (multiple - w % multiple) % multiple;
  if (ph == 0 && pw == 0) return t;
  if (ph >= h || pw >= w) {
    throw Error(ErrorKind::InvalidArgument, "image too small to reflect-pad to a multiple of " +
                                                std::to_string(multiple));
  }
  Tensor out(t.n(), t.c(), h + ph, w + pw);
  for (std::int64_t n = 0; n < t.n(); ++n) {
    for (std::int64_t c = 0; c < t.c(); ++c) {
      for (std::int64_t i = 0; i < h + ph; ++i) {
        const std::int64_t si = i < h ? i : 2 * h - 1 - i;  // mirror with edge repeat
        for (std::int64_t j = 0; j < w + pw; ++j) {
          const std::int64_t sj = j < w ? j : 2 * w - 1 - j;
          out.at(n, c, i, j) = t.at(n, c, si, sj);
        }
      }
    }
  }
  return out;
}

Tensor crop_to(const Tensor& t, std::int64_t h, std::int64_t w) {
  if (h > t.h() || w > t.w()) throw Error(ErrorKind::InvalidArgument, "crop larger than tensor");
  if (h == t.h() && w == t.w()) return t;
  Tensor out(t.n(), t.c(), h, w);
  for (std::int64_t n = 0; n < t.n(); ++n) {
    for (std::int64_t c = 0; c < t.c(); ++c) {
      for (std::int64_t i = 0; i < h; ++i) {
        const float* src = t.data() + ((n * t.c() + c) * t.h() + i) * t.w();
        float* dst = out.data() + ((n * t.c() + c) * h + i) * w;
        std::copy(src, src + w, dst);
      }
    }
  }
  return out;
}

}  // namespace blindpaint::io
