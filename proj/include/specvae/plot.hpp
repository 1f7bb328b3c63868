#pragma once

// Minimal raster plotting: an RGB canvas with a built-in 5x7 font, written
// out as deterministic PNGs (fixed chunks, no timestamps, zlib level 6).
// Enough for heatmaps, confusion matrices, bar charts and INR histograms.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "specvae/augment.hpp"
#include "specvae/common.hpp"
#include "specvae/synth.hpp"

namespace specvae {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<Rgb8> pixels;

  Canvas(int w, int h, Rgb8 background = {255, 255, 255});

  // out-of-range coordinates are clipped silently
  void set(int x, int y, Rgb8 c);
  Rgb8 get(int x, int y) const;
  void fill_rect(int x, int y, int w, int h, Rgb8 c);
  void hline(int x0, int x1, int y, Rgb8 c);
  void vline(int x, int y0, int y1, Rgb8 c);

  // 5x7 glyphs on a 6px advance; lowercase renders as uppercase; unknown
  // glyphs draw as a filled box
  void draw_text(int x, int y, const std::string& text, Rgb8 c);
  static int text_width(const std::string& text);
};

void write_png(const std::filesystem::path& path, const Canvas& canvas);

// perceptual-ish dark-blue -> teal -> yellow ramp on [0,1]
Rgb8 sequential_color(float v);

Canvas heatmap(const Imagef& img, int scale = 4);
// frames side by side with a gap; all frames must share dims
Canvas spectrogram_strip(const std::vector<Spectrogram>& frames, int scale = 4, int gap = 2);
Canvas confusion_plot(const MatX<int>& confusion, const std::vector<std::string>& labels,
                      const std::string& title);
Canvas bar_chart(const std::vector<std::string>& names, const std::vector<double>& values,
                 const std::string& title, const std::string& y_label);
Canvas histogram_plot(const InrHistogram& hist, const std::string& title);

}  // namespace specvae
