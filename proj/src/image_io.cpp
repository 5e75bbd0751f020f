#include "primfit/image_io.hpp"

#include "primfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace primfit {

namespace {

// Reads the next header integer, skipping whitespace and '#' comments.
int header_int(std::istream& in, const std::string& path) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = 0;
  if (!(in >> v)) throw ValidationError("malformed netpbm header: " + path);
  return v;
}

struct Header {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

Header read_header(std::istream& in, const std::string& path) {
  Header h;
  in >> h.magic;
  h.width = header_int(in, path);
  h.height = header_int(in, path);
  h.maxval = header_int(in, path);
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 255) {
    throw ValidationError("unsupported netpbm dimensions or depth: " + path);
  }
  in.get();  // single whitespace before raster
  return h;
}

}  // namespace

Mask read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open mask: " + path);
  const Header h = read_header(in, path);
  Mask m(h.height, h.width);
  const auto scale = [&](int v) { return v * 255 / h.maxval >= 128 ? 1 : 0; };
  if (h.magic == "P5") {
    std::vector<unsigned char> raster(static_cast<std::size_t>(h.width) * h.height);
    if (!in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()))) {
      throw ValidationError("truncated graymap: " + path);
    }
    for (int i = 0; i < h.height; ++i) {
      for (int j = 0; j < h.width; ++j) m(i, j) = static_cast<std::uint8_t>(scale(raster[static_cast<std::size_t>(i) * h.width + j]));
    }
  } else if (h.magic == "P2") {
    for (int i = 0; i < h.height; ++i) {
      for (int j = 0; j < h.width; ++j) m(i, j) = static_cast<std::uint8_t>(scale(header_int(in, path)));
    }
  } else {
    throw ValidationError("not a graymap (P2/P5): " + path);
  }
  return m;
}

void write_mask(const std::string& path, const Mask& mask) {
  write_gray(path, mask.cast<double>());
}

void write_gray(const std::string& path, const Eigen::MatrixXd& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image: " + path);
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < image.rows(); ++i) {
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      const double v = std::clamp(image(i, j), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
}

RgbImage read_rgb(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image: " + path);
  const Header h = read_header(in, path);
  if (h.magic != "P6") throw ValidationError("not a binary pixmap (P6): " + path);
  RgbImage img;
  img.width = h.width;
  img.height = h.height;
  img.data.resize(static_cast<std::size_t>(h.width) * h.height * 3);
  if (!in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()))) {
    throw ValidationError("truncated pixmap: " + path);
  }
  if (h.maxval != 255) {
    for (auto& v : img.data) v = static_cast<std::uint8_t>(v * 255 / h.maxval);
  }
  return img;
}

void write_rgb(const std::string& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image: " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
}

}  // namespace primfit
