#include "specvae/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace specvae {

namespace {

struct Glyph {
  char c;
  std::uint8_t rows[7];  // low 5 bits per row, bit 4 = leftmost column
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {'\\', {0x10, 0x08, 0x08, 0x04, 0x02, 0x02, 0x01}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'*', {0x00, 0x04, 0x15, 0x0E, 0x15, 0x04, 0x00}},
    {'\'', {0x04, 0x04, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'<', {0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02}},
    {'>', {0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08}},
};

const std::uint8_t* glyph_rows(char c) {
  if (c >= 'a' && c <= 'z') c = char(c - 'a' + 'A');
  for (const auto& g : kFont)
    if (g.c == c) return g.rows;
  return nullptr;
}

void put_u32be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char* type,
                  const unsigned char* data, std::size_t n) {
  put_u32be(out, std::uint32_t(n));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (n) out.insert(out.end(), data, data + n);
  const auto crc = std::uint32_t(
      ::crc32(0L, out.data() + start, uInt(n + 4)));
  put_u32be(out, crc);
}

std::string fmt_short(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Rgb8 lerp_color(Rgb8 a, Rgb8 b, float t) {
  auto mix = [t](std::uint8_t x, std::uint8_t y) {
    return std::uint8_t(std::lround(float(x) + t * (float(y) - float(x))));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

// dark shades get white text, light shades black
Rgb8 contrast_text(Rgb8 bg) {
  const double lum = 0.299 * bg.r + 0.587 * bg.g + 0.114 * bg.b;
  return lum > 140.0 ? Rgb8{0, 0, 0} : Rgb8{255, 255, 255};
}

constexpr Rgb8 kGrid{90, 90, 100};
constexpr Rgb8 kBlack{0, 0, 0};
constexpr Rgb8 kBar{70, 110, 180};
constexpr Rgb8 kNoiseLine{60, 90, 200};
constexpr Rgb8 kInterfLine{200, 60, 50};

}  // namespace

Canvas::Canvas(int w, int h, Rgb8 background) : width(w), height(h) {
  check(w >= 1 && h >= 1, "canvas: dims must be positive");
  pixels.assign(std::size_t(w) * std::size_t(h), background);
}

void Canvas::set(int x, int y, Rgb8 c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)] = c;
}

Rgb8 Canvas::get(int x, int y) const {
  check(x >= 0 && y >= 0 && x < width && y < height, "canvas: get out of range");
  return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)];
}

void Canvas::fill_rect(int x, int y, int w, int h, Rgb8 c) {
  for (int j = y; j < y + h; ++j)
    for (int i = x; i < x + w; ++i) set(i, j, c);
}

void Canvas::hline(int x0, int x1, int y, Rgb8 c) {
  if (x1 < x0) std::swap(x0, x1);
  for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Canvas::vline(int x, int y0, int y1, Rgb8 c) {
  if (y1 < y0) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y) set(x, y, c);
}

void Canvas::draw_text(int x, int y, const std::string& text, Rgb8 c) {
  for (char ch : text) {
    const std::uint8_t* rows = glyph_rows(ch);
    if (rows == nullptr) {
      fill_rect(x, y, 5, 7, c);
    } else {
      for (int r = 0; r < 7; ++r)
        for (int b = 0; b < 5; ++b)
          if (rows[r] & (1u << (4 - b))) set(x + b, y + r, c);
    }
    x += 6;
  }
}

int Canvas::text_width(const std::string& text) {
  return text.empty() ? 0 : int(text.size()) * 6 - 1;
}

void write_png(const std::filesystem::path& path, const Canvas& canvas) {
  // filter byte 0 per scanline, fixed zlib level: byte-identical on rerun
  std::vector<unsigned char> raw;
  raw.reserve(std::size_t(canvas.height) * (std::size_t(canvas.width) * 3 + 1));
  for (int y = 0; y < canvas.height; ++y) {
    raw.push_back(0);
    for (int x = 0; x < canvas.width; ++x) {
      const Rgb8 p = canvas.get(x, y);
      raw.push_back(p.r);
      raw.push_back(p.g);
      raw.push_back(p.b);
    }
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw std::runtime_error("write_png: deflate failed");
  comp.resize(comp_len);

  std::vector<unsigned char> out = {137, 80, 78, 71, 13, 10, 26, 10};
  unsigned char ihdr[13];
  const auto w = std::uint32_t(canvas.width), h = std::uint32_t(canvas.height);
  ihdr[0] = static_cast<unsigned char>(w >> 24);
  ihdr[1] = static_cast<unsigned char>(w >> 16);
  ihdr[2] = static_cast<unsigned char>(w >> 8);
  ihdr[3] = static_cast<unsigned char>(w);
  ihdr[4] = static_cast<unsigned char>(h >> 24);
  ihdr[5] = static_cast<unsigned char>(h >> 16);
  ihdr[6] = static_cast<unsigned char>(h >> 8);
  ihdr[7] = static_cast<unsigned char>(h);
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 2;   // color type: RGB
  ihdr[10] = 0;  // compression
  ihdr[11] = 0;  // filter
  ihdr[12] = 0;  // interlace
  append_chunk(out, "IHDR", ihdr, sizeof(ihdr));
  append_chunk(out, "IDAT", comp.data(), comp.size());
  append_chunk(out, "IEND", nullptr, 0);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f.good()) throw std::runtime_error("write_png: write failed for '" + path.string() + "'");
}

Rgb8 sequential_color(float v) {
  v = std::clamp(v, 0.0f, 1.0f);
  static constexpr Rgb8 stops[] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  const float s = v * 4.0f;
  const int i = std::min(3, int(s));
  return lerp_color(stops[i], stops[i + 1], s - float(i));
}

Canvas heatmap(const Imagef& img, int scale) {
  check(img.rows() > 0 && img.cols() > 0, "heatmap: empty image");
  check(scale >= 1, "heatmap: scale must be positive");
  Canvas c(int(img.cols()) * scale, int(img.rows()) * scale);
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index q = 0; q < img.cols(); ++q)
      c.fill_rect(int(q) * scale, int(r) * scale, scale, scale, sequential_color(img(r, q)));
  return c;
}

Canvas spectrogram_strip(const std::vector<Spectrogram>& frames, int scale, int gap) {
  check(!frames.empty(), "spectrogram_strip: no frames");
  check(scale >= 1 && gap >= 0, "spectrogram_strip: bad layout params");
  const int h = frames.front().height(), w = frames.front().width();
  for (const auto& f : frames)
    check(f.height() == h && f.width() == w, "spectrogram_strip: mixed frame dims");
  const int n = int(frames.size());
  Canvas c(n * w * scale + (n - 1) * gap, h * scale, {230, 230, 235});
  for (int i = 0; i < n; ++i) {
    const int x0 = i * (w * scale + gap);
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q)
        c.fill_rect(x0 + q * scale, r * scale, scale, scale,
                    sequential_color(frames[std::size_t(i)].data(r, q)));
  }
  return c;
}

Canvas confusion_plot(const MatX<int>& confusion, const std::vector<std::string>& labels,
                      const std::string& title) {
  const int k = int(confusion.rows());
  check(k >= 1 && confusion.cols() == k, "confusion_plot: matrix must be square");
  check(int(labels.size()) == k, "confusion_plot: label count mismatch");
  int label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, Canvas::text_width(l));
  const int cell = std::max(26, label_w + 10);
  const int left = label_w + 8, top = 18, bottom = 14, right = 6;
  Canvas c(left + k * cell + right, top + k * cell + bottom);
  c.draw_text(std::max(2, (c.width - Canvas::text_width(title)) / 2), 4, title, kBlack);
  for (int r = 0; r < k; ++r) {
    double row_sum = 0;
    for (int q = 0; q < k; ++q) row_sum += confusion(r, q);
    c.draw_text(left - 8 - Canvas::text_width(labels[std::size_t(r)]),
                top + r * cell + (cell - 7) / 2, labels[std::size_t(r)], kBlack);
    for (int q = 0; q < k; ++q) {
      const float shade = row_sum > 0 ? float(confusion(r, q) / row_sum) : 0.0f;
      const Rgb8 bg = sequential_color(shade);
      c.fill_rect(left + q * cell, top + r * cell, cell, cell, bg);
      const std::string t = std::to_string(confusion(r, q));
      c.draw_text(left + q * cell + (cell - Canvas::text_width(t)) / 2,
                  top + r * cell + (cell - 7) / 2, t, contrast_text(bg));
    }
  }
  for (int q = 0; q < k; ++q)
    c.draw_text(left + q * cell + (cell - Canvas::text_width(labels[std::size_t(q)])) / 2,
                top + k * cell + 4, labels[std::size_t(q)], kBlack);
  for (int i = 0; i <= k; ++i) {
    c.hline(left, left + k * cell, top + i * cell, kGrid);
    c.vline(left + i * cell, top, top + k * cell, kGrid);
  }
  return c;
}

Canvas bar_chart(const std::vector<std::string>& names, const std::vector<double>& values,
                 const std::string& title, const std::string& y_label) {
  check(!names.empty(), "bar_chart: no bars");
  check(names.size() == values.size(), "bar_chart: names/values size mismatch");
  for (double v : values) check(std::isfinite(v), "bar_chart: non-finite value");
  int name_w = 0;
  for (const auto& n : names) name_w = std::max(name_w, Canvas::text_width(n));
  const int n = int(names.size());
  const int bw = std::max(30, name_w + 8), gap = 8;
  const int left = 52, top = 18, bottom = 16, right = 8, ph = 150;
  Canvas c(left + n * (bw + gap) + gap + right, top + ph + bottom);

  double lo = 0, hi = 0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1.0;
  const double span = hi - lo;
  hi += 0.06 * span;
  if (lo < 0) lo -= 0.06 * span;
  auto y_of = [&](double v) { return top + int(std::lround((hi - v) / (hi - lo) * ph)); };

  c.draw_text(std::max(2, (c.width - Canvas::text_width(title)) / 2), 4, title, kBlack);
  c.vline(left - 1, top, top + ph, kGrid);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const int y = y_of(v);
    c.hline(left - 4, left - 2, y, kGrid);
    const std::string lbl = fmt_short(v);
    c.draw_text(left - 6 - Canvas::text_width(lbl), y - 3, lbl, kBlack);
  }
  const int base_y = y_of(0.0);
  c.hline(left - 1, c.width - right, base_y, kGrid);
  for (int i = 0; i < n; ++i) {
    const double v = values[std::size_t(i)];
    const int x = left + gap + i * (bw + gap);
    const int y = y_of(v);
    if (v >= 0)
      c.fill_rect(x, y, bw, base_y - y, kBar);
    else
      c.fill_rect(x, base_y + 1, bw, y - base_y, kBar);
    const std::string vt = fmt_short(v);
    c.draw_text(x + (bw - Canvas::text_width(vt)) / 2, (v >= 0 ? y - 9 : y + 2), vt, kBlack);
    c.draw_text(x + (bw - Canvas::text_width(names[std::size_t(i)])) / 2, top + ph + 5,
                names[std::size_t(i)], kBlack);
  }
  c.draw_text(2, 4, y_label, kBlack);
  return c;
}

Canvas histogram_plot(const InrHistogram& hist, const std::string& title) {
  const int n = int(hist.counts.size());
  check(n >= 1, "histogram_plot: empty histogram");
  check(hist.bin_edges.size() == n + 1, "histogram_plot: edge count mismatch");
  const int bw = std::max(3, 420 / n);
  const int left = 46, top = 30, bottom = 16, right = 8, ph = 150;
  Canvas c(left + n * bw + right, top + ph + bottom);
  int max_count = 1;
  for (int v : hist.counts) max_count = std::max(max_count, v);

  c.draw_text(std::max(2, (c.width - Canvas::text_width(title)) / 2), 4, title, kBlack);
  c.vline(left - 1, top, top + ph, kGrid);
  c.hline(left - 1, c.width - right, top + ph, kGrid);
  for (int i = 0; i < n; ++i) {
    const int bh = int(std::lround(double(hist.counts[std::size_t(i)]) / max_count * ph));
    c.fill_rect(left + i * bw, top + ph - bh, bw - 1, bh, {120, 130, 150});
  }

  const double v_lo = hist.bin_edges(0), v_hi = hist.bin_edges(n);
  auto x_of = [&](double v) {
    if (v_hi == v_lo) return left;
    return left + int(std::lround((v - v_lo) / (v_hi - v_lo) * (n * bw - 1)));
  };
  c.vline(x_of(hist.noise_mean), top, top + ph, kNoiseLine);
  if (!hist.single_population) c.vline(x_of(hist.interference_mean), top, top + ph, kInterfLine);
  c.draw_text(left, 13, "NOISE " + fmt_short(hist.noise_mean), kNoiseLine);
  c.draw_text(left, 22, "INTERF " + fmt_short(hist.interference_mean) +
                            "  DELTA " + fmt_short(hist.delta),
              kInterfLine);

  const std::string lo_lbl = fmt_short(v_lo), hi_lbl = fmt_short(v_hi);
  c.draw_text(left, top + ph + 5, lo_lbl, kBlack);
  c.draw_text(left + n * bw - Canvas::text_width(hi_lbl), top + ph + 5, hi_lbl, kBlack);
  return c;
}

}  // namespace specvae
