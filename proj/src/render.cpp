#include "milcci/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>

namespace milcci {

namespace {

void appendf(std::string& out, const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out += buf;
}

// Diverging color: negative values toward blue, positive toward red.
std::string cell_color(double v, double scale) {
  const double t = scale > 0.0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
  int r = 255, g = 255, b = 255;
  if (t >= 0.0) {
    g = b = static_cast<int>(255.0 - t * 215.0);
  } else {
    r = g = static_cast<int>(255.0 + t * 215.0);
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

const char* kPalette[8] = {"#c23b22", "#2a6f97", "#3a7d44", "#8e4d9e",
                           "#c07f00", "#0f8b8d", "#6c586b", "#903749"};

}  // namespace

std::string render_model_svg(const ModelState& state,
                             const std::vector<CategorySpec>& categories,
                             const Matrix* trace_example, const std::string& trace_title) {
  const int margin = 24;
  const int label_h = 16;
  const int cell_w = 16;
  const int gap = 18;

  double scale = 0.0;
  for (const ComponentTensor& tensor : state.components)
    for (const Matrix& v : tensor.variants)
      for (std::size_t i = 0; i < v.size(); ++i) scale = std::max(scale, std::fabs(v.data()[i]));

  // Measure first.
  int width = 0;
  int y = margin;
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    const ComponentTensor& tensor = state.components[k];
    const std::size_t n = tensor.n_channels();
    const int cell_h = std::max(2, static_cast<int>(240 / std::max<std::size_t>(n, 1)));
    int x = margin;
    for (std::size_t vi = 0; vi < tensor.n_variants(); ++vi)
      x += static_cast<int>(tensor.n_components()) * cell_w + gap;
    width = std::max(width, x + margin - gap);
    y += label_h + static_cast<int>(n) * cell_h + gap;
  }
  const int trace_w = 640, trace_h = 150;
  if (trace_example) {
    width = std::max(width, margin * 2 + trace_w);
    y += label_h + trace_h + gap;
  }
  const int height = y + margin;
  width = std::max(width, 320);

  std::string svg;
  appendf(svg, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n",
          width, height, width, height);
  appendf(svg, "<rect width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n", width, height);

  y = margin;
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    const ComponentTensor& tensor = state.components[k];
    const std::size_t n = tensor.n_channels();
    const std::size_t p = tensor.n_components();
    const int cell_h = std::max(2, static_cast<int>(240 / std::max<std::size_t>(n, 1)));
    int x = margin;
    for (std::size_t vi = 0; vi < tensor.n_variants(); ++vi) {
      const std::string label =
          k < categories.size() && vi < categories[k].values.size()
              ? categories[k].name + " = " + categories[k].values[vi]
              : "variant " + std::to_string(vi);
      appendf(svg,
              "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
              "fill=\"#333\">%s</text>\n",
              x, y + 11, label.c_str());
      const Matrix& v = tensor.variants[vi];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
          appendf(svg, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"/>\n",
                  x + static_cast<int>(j) * cell_w, y + label_h + static_cast<int>(i) * cell_h,
                  cell_w, cell_h, cell_color(v(i, j), scale).c_str());
      x += static_cast<int>(p) * cell_w + gap;
    }
    y += label_h + static_cast<int>(n) * cell_h + gap;
  }

  if (trace_example) {
    const Matrix& phi = *trace_example;
    appendf(svg,
            "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
            "fill=\"#333\">%s</text>\n",
            margin, y + 11, trace_title.c_str());
    const int top = y + label_h;
    appendf(svg, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" "
                 "stroke=\"#cccccc\"/>\n",
            margin, top, trace_w, trace_h);
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      lo = std::min(lo, phi.data()[i]);
      hi = std::max(hi, phi.data()[i]);
    }
    if (hi <= lo) hi = lo + 1.0;
    const std::size_t t_len = phi.cols();
    for (std::size_t j = 0; j < phi.rows(); ++j) {
      std::string points;
      for (std::size_t t = 0; t < t_len; ++t) {
        const double px =
            margin + (t_len > 1 ? double(t) / double(t_len - 1) : 0.5) * trace_w;
        const double py = top + (1.0 - (phi(j, t) - lo) / (hi - lo)) * trace_h;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px, py);
        points += buf;
      }
      appendf(svg,
              "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.2\" points=\"%s\"/>\n",
              kPalette[j % 8], points.c_str());
    }
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace milcci
