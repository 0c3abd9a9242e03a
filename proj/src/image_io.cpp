#include "geod/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

namespace geod {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t quantize(double v) {
  double x = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<uint8_t>(std::lround(x));
}

}  // namespace

void write_png(const std::string& path, const Tensor& image) {
  GEOD_CHECK(image.ndim() == 3 && (image.dim(2) == 3 || image.dim(2) == 1),
             "write_png: expected [H,W,3] or [H,W,1], got " << shape_str(image.shape()));
  int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  GEOD_CHECK(fp, "cannot open '" << path << "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GEOD_CHECK(png, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failure writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::vector<double>& vals = image.values();
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double v = vals[(static_cast<int64_t>(y) * w + x) * c + (c == 3 ? ch : 0)];
        row[static_cast<size_t>(x) * 3 + ch] = quantize(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  GEOD_CHECK(fp, "cannot open '" << path << "'");
  uint8_t sig[8];
  GEOD_CHECK(std::fread(sig, 1, 8, fp.get()) == 8 && !png_sig_cmp(sig, 0, 8),
             "'" << path << "' is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  GEOD_CHECK(png, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("corrupt PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  // Normalize every input to 8-bit RGB.
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<uint8_t> rows(static_cast<size_t>(h) * w * 3);
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = rows.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<double> vals(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) vals[i] = rows[i] / 255.0;
  return Tensor::from_data({h, w, 3}, std::move(vals));
}

void write_f32(const std::string& path, const Tensor& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GEOD_CHECK(out.good(), "cannot open '" << path << "' for writing");
  std::vector<float> buf(map.values().begin(), map.values().end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  GEOD_CHECK(out.good(), "write failure on '" << path << "'");
}

Tensor read_f32(const std::string& path, int height, int width) {
  std::ifstream in(path, std::ios::binary);
  GEOD_CHECK(in.good(), "cannot open '" << path << "'");
  int64_t n = static_cast<int64_t>(height) * width;
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), n * static_cast<int64_t>(sizeof(float)));
  GEOD_CHECK(in.gcount() == n * static_cast<int64_t>(sizeof(float)),
             "'" << path << "': expected " << n << " float32 values (truncated?)");
  char extra;
  GEOD_CHECK(!in.read(&extra, 1), "'" << path << "': trailing bytes beyond " << height << "x" << width);
  return Tensor::from_data({height, width}, std::vector<double>(buf.begin(), buf.end()));
}

Tensor encode_normal_map(const Tensor& normals) {
  return add(mul(normals, 0.5), 0.5);
}

Tensor decode_normal_map(const Tensor& packed) {
  return l2_normalize_last(sub(mul(packed, 2.0), 1.0));
}

}  // namespace geod
