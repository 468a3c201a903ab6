#include "ghost/data/idx.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "ghost/error.hpp"

namespace ghost::data {

namespace {

struct GzCloser {
  void operator()(gzFile f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

std::size_t read_up_to(gzFile f, void* dst, std::size_t n) {
  auto* out = static_cast<unsigned char*>(dst);
  std::size_t got = 0;
  while (got < n) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
    const int r = gzread(f, out + got, chunk);
    if (r <= 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

std::uint32_t read_be32(gzFile f, const std::filesystem::path& path) {
  unsigned char b[4];
  if (read_up_to(f, b, 4) != 4) throw Error(ErrorCode::TruncatedPayload, "short IDX header in " + path.string());
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

IdxFile read_idx(const std::filesystem::path& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());

  IdxFile idx;
  idx.magic = read_be32(f.get(), path);
  std::size_t ndims = 0;
  if (idx.magic == kIdxImagesMagic) {
    ndims = 3;
  } else if (idx.magic == kIdxLabelsMagic) {
    ndims = 1;
  } else {
    std::ostringstream msg;
    msg << "unexpected magic 0x" << std::hex << idx.magic << " in " << path.string();
    throw Error(ErrorCode::BadMagic, msg.str());
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    idx.dims.push_back(read_be32(f.get(), path));
    count *= idx.dims.back();
  }
  idx.bytes.resize(count);
  if (read_up_to(f.get(), idx.bytes.data(), count) != count) {
    throw Error(ErrorCode::TruncatedPayload, "payload shorter than header in " + path.string());
  }
  return idx;
}

ImageSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
  const IdxFile img = read_idx(images);
  if (img.magic != kIdxImagesMagic) throw Error(ErrorCode::BadMagic, images.string() + " is not an image file");

  const std::size_t n = img.dims[0], rows = img.dims[1], cols = img.dims[2];
  ImageSet set;
  set.split = split;
  set.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> px(rows * cols);
    for (std::size_t j = 0; j < px.size(); ++j) px[j] = img.bytes[i * rows * cols + j] / 255.0;
    set.images.emplace_back(cols, rows, std::move(px));
  }

  if (!labels.empty()) {
    const IdxFile lab = read_idx(labels);
    if (lab.magic != kIdxLabelsMagic) throw Error(ErrorCode::BadMagic, labels.string() + " is not a label file");
    if (lab.dims[0] != n) {
      throw Error(ErrorCode::DimensionMismatch,
                  "label count " + std::to_string(lab.dims[0]) + " != image count " + std::to_string(n));
    }
    set.labels.emplace(lab.bytes.begin(), lab.bytes.end());
  }
  return set;
}

Image resize_bilinear(const Image& img, std::size_t width, std::size_t height) {
  std::vector<double> out(width * height);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
  const auto max_x = static_cast<double>(img.width() - 1);
  const auto max_y = static_cast<double>(img.height() - 1);
  for (std::size_t r = 0; r < height; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = img(y0, x0) * (1.0 - fx) + img(y0, x1) * fx;
      const double bot = img(y1, x0) * (1.0 - fx) + img(y1, x1) * fx;
      out[r * width + c] = std::clamp(top * (1.0 - fy) + bot * fy, 0.0, 1.0);
    }
  }
  return Image(width, height, std::move(out));
}

ImageSet preprocess(const ImageSet& set, std::size_t target, double threshold) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "nothing to preprocess");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0,1)");
  if (target == 0) throw Error(ErrorCode::InvalidArgument, "target size must be positive");

  ImageSet out;
  out.split = set.split;
  out.labels = set.labels;
  out.images.reserve(set.size());
  for (const auto& img : set.images) {
    Image resized = resize_bilinear(img, target, target);
    for (double& p : resized.pixels()) p = p >= threshold ? 1.0 : 0.0;
    out.images.push_back(std::move(resized));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  os << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::string row(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i) {
    row[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0)));
  }
  os.write(row.data(), static_cast<std::streamsize>(row.size()));
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) throw Error(ErrorCode::BadMagic, path.string() + " is not an 8-bit P5 PGM");
  is.get();
  std::string raw(w * h, '\0');
  if (!is.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
    throw Error(ErrorCode::TruncatedPayload, "short PGM payload in " + path.string());
  }
  std::vector<double> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = static_cast<unsigned char>(raw[i]) / 255.0;
  return Image(w, h, std::move(px));
}

Image montage(const std::vector<std::vector<Image>>& rows, std::size_t gap, double background) {
  std::size_t tile_w = 0, tile_h = 0, ncols = 0;
  for (const auto& row : rows) {
    ncols = std::max(ncols, row.size());
    for (const auto& img : row) {
      tile_w = std::max(tile_w, img.width());
      tile_h = std::max(tile_h, img.height());
    }
  }
  const std::size_t W = ncols * tile_w + (ncols + 1) * gap;
  const std::size_t H = rows.size() * tile_h + (rows.size() + 1) * gap;
  Image out(W, H, background);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const Image& img = rows[r][c];
      const std::size_t oy = gap + r * (tile_h + gap), ox = gap + c * (tile_w + gap);
      for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x) out(oy + y, ox + x) = img(y, x);
    }
  }
  return out;
}

}  // namespace ghost::data
