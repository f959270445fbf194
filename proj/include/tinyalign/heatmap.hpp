#pragma once

// Similarity-matrix heatmaps as binary PPM (P6) images, one cell per
// (source token, target token). Source tokens are rows, target tokens are
// columns, so the image is len(t)*cell wide and len(s)*cell tall.
//
// Cell gray level is the min-max normalized cosine similarity of the
// matrix (bright = similar); a constant matrix maps to mid-gray. Overlays:
// red center dot for predicted links, thick green border for sure gold
// links, thin green border for possible gold links. Token labels go to a
// sidecar text file.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tinyalign/aligner.hpp"
#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"

namespace tinyalign {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

class RgbImage {
 public:
  RgbImage(std::size_t width, std::size_t height, Rgb fill = {0, 0, 0})
      : width_(width), height_(height), pixels_(width * height * 3) {
    for (std::size_t p = 0; p < width_ * height_; ++p) set_index(p, fill);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }

  void set(std::size_t x, std::size_t y, Rgb color) {
    set_index(y * width_ + x, color);
  }

  Rgb get(std::size_t x, std::size_t y) const {
    const std::size_t base = (y * width_ + x) * 3;
    return {pixels_[base], pixels_[base + 1], pixels_[base + 2]};
  }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

 private:
  void set_index(std::size_t p, Rgb color) {
    pixels_[p * 3] = color.r;
    pixels_[p * 3 + 1] = color.g;
    pixels_[p * 3 + 2] = color.b;
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline void write_ppm(std::ostream& out, const RgbImage& image) {
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels().data()),
            static_cast<std::streamsize>(image.pixels().size()));
}

inline void write_ppm(const std::filesystem::path& path,
                      const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_ppm(out, image);
}

struct HeatmapOptions {
  std::size_t cell_size = 24;
};

inline RgbImage render_similarity_heatmap(const SimilarityMatrix& sim,
                                          const Alignment& predicted,
                                          const GoldAlignment* gold,
                                          const HeatmapOptions& options = {}) {
  const std::size_t m = sim.values.rows();
  const std::size_t n = sim.values.cols();
  const std::size_t c = options.cell_size;
  if (m == 0 || n == 0 || c == 0) throw ShapeError("empty heatmap");

  double lo = sim.values(0, 0);
  double hi = sim.values(0, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      lo = std::min(lo, sim.values(i, j));
      hi = std::max(hi, sim.values(i, j));
    }
  }
  const double range = hi - lo;

  RgbImage image(n * c, m * c);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double t =
          range == 0.0 ? 0.5 : (sim.values(i, j) - lo) / range;
      const auto gray = static_cast<std::uint8_t>(
          std::clamp(t * 255.0 + 0.5, 0.0, 255.0));
      for (std::size_t y = i * c; y < (i + 1) * c; ++y) {
        for (std::size_t x = j * c; x < (j + 1) * c; ++x) {
          image.set(x, y, {gray, gray, gray});
        }
      }
    }
  }

  const Rgb green{40, 200, 40};
  auto draw_border = [&](std::size_t i, std::size_t j,
                         std::size_t thickness) {
    for (std::size_t dy = 0; dy < c; ++dy) {
      for (std::size_t dx = 0; dx < c; ++dx) {
        const bool on_border = dy < thickness || dx < thickness ||
                               dy >= c - thickness || dx >= c - thickness;
        if (on_border) image.set(j * c + dx, i * c + dy, green);
      }
    }
  };
  if (gold) {
    for (const Link& link : gold->sure) {
      if (link.first < m && link.second < n) {
        draw_border(link.first, link.second, std::max<std::size_t>(3, c / 8));
      }
    }
    for (const Link& link : gold->possible) {
      if (link.first < m && link.second < n) {
        draw_border(link.first, link.second, 1);
      }
    }
  }

  const Rgb red{220, 40, 40};
  const long long radius = std::max<long long>(2, static_cast<long long>(c) / 5);
  for (const Link& link : predicted.links) {
    if (link.first >= m || link.second >= n) continue;
    const long long cy = static_cast<long long>(link.first * c + c / 2);
    const long long cx = static_cast<long long>(link.second * c + c / 2);
    for (long long dy = -radius; dy <= radius; ++dy) {
      for (long long dx = -radius; dx <= radius; ++dx) {
        if (dx * dx + dy * dy > radius * radius) continue;
        const long long x = cx + dx;
        const long long y = cy + dy;
        if (x >= 0 && y >= 0 && x < static_cast<long long>(image.width()) &&
            y < static_cast<long long>(image.height())) {
          image.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                    red);
        }
      }
    }
  }
  return image;
}

// Row and column token labels for a rendered pair.
inline void write_heatmap_labels(std::ostream& out,
                                 const SentencePair& pair) {
  out << "# pair " << pair.pair_id << '\n';
  out << "# rows: source tokens\n";
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    out << i << '\t' << pair.source.tokens[i] << '\n';
  }
  out << "# cols: target tokens\n";
  for (std::size_t j = 0; j < pair.target.size(); ++j) {
    out << j << '\t' << pair.target.tokens[j] << '\n';
  }
}

inline void write_heatmap_labels(const std::filesystem::path& path,
                                 const SentencePair& pair) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_heatmap_labels(out, pair);
}

}  // namespace tinyalign
