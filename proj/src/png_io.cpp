#include "addnet/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

namespace addnet::io {

ImageXf read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error("cannot decode PNG " + path.string() + ": " + png.message);
  }
  const int w = int(png.width);
  const int h = int(png.height);
  ImageXf image(w, h, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        image.channels[c](y, x) =
            float(buffer[(std::size_t(y) * w + x) * channels + c]) / 255.0f;
  return image;
}

namespace {

png_byte to_byte(double v) {
  const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return png_byte(std::lround(clamped * 255.0));
}

void write_buffer(const std::filesystem::path& path, int w, int h, int channels,
                  const std::vector<png_byte>& buffer) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(w);
  png.height = png_uint_32(h);
  png.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageXf& image) {
  const int channels = image.num_channels();
  if (channels != 1 && channels != 3)
    throw ShapeMismatch("PNG output needs 1 or 3 channels, got " + std::to_string(channels));
  const int w = image.width();
  const int h = image.height();
  std::vector<png_byte> buffer(std::size_t(w) * h * channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        buffer[(std::size_t(y) * w + x) * channels + c] = to_byte(image.channels[c](y, x));
  write_buffer(path, w, h, channels, buffer);
}

void write_png(const std::filesystem::path& path, const PlaneXd& gray) {
  const int w = int(gray.cols());
  const int h = int(gray.rows());
  std::vector<png_byte> buffer(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) buffer[std::size_t(y) * w + x] = to_byte(gray(y, x));
  write_buffer(path, w, h, 1, buffer);
}

}  // namespace addnet::io
