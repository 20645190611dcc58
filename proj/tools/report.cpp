#include "report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vslam::cli {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr double kWidth = 820.0;
constexpr double kPanelHeight = 340.0;
constexpr double kLeft = 80.0, kRight = 170.0, kTop = 40.0, kBottom = 50.0;

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-300) {
      const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

std::vector<double> ticks(const Range& r, bool log_scale) {
  std::vector<double> out;
  if (log_scale) {
    for (double e = std::floor(r.lo); e <= std::ceil(r.hi); e += std::max(1.0, std::ceil((r.hi - r.lo) / 8.0))) {
      if (e >= r.lo - 1e-9 && e <= r.hi + 1e-9) out.push_back(e);
    }
    return out;
  }
  const double raw = (r.hi - r.lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {2.0, 5.0, 10.0}) {
    if (step < raw) step = m * mag;
  }
  for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) out.push_back(t);
  return out;
}

class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {}

  void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 12,
            const char* extra = "") {
    os_ << "<text x=\"" << fmt(x, 6) << "\" y=\"" << fmt(y, 6) << "\" font-size=\"" << size << "\" text-anchor=\""
        << anchor << "\"" << extra << ">" << escape_xml(s) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke, double width = 1.0) {
    os_ << "<line x1=\"" << fmt(x1, 6) << "\" y1=\"" << fmt(y1, 6) << "\" x2=\"" << fmt(x2, 6) << "\" y2=\""
        << fmt(y2, 6) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* stroke, const char* fill) {
    os_ << "<rect x=\"" << fmt(x, 6) << "\" y=\"" << fmt(y, 6) << "\" width=\"" << fmt(w, 6) << "\" height=\""
        << fmt(h, 6) << "\" stroke=\"" << stroke << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, double r, const char* fill) {
    os_ << "<circle cx=\"" << fmt(x, 6) << "\" cy=\"" << fmt(y, 6) << "\" r=\"" << r << "\" fill=\"" << fill
        << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke) {
    if (pts.size() < 2) return;
    os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) os_ << fmt(x, 6) << ',' << fmt(y, 6) << ' ';
    os_ << "\"/>\n";
  }

  std::string finish() const {
    std::ostringstream doc;
    doc << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width_ << "\" height=\"" << height_
        << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << os_.str() << "</svg>\n";
    return doc.str();
  }

 private:
  double width_, height_;
  std::ostringstream os_;
};

struct Frame {
  double x0, y0, w, h;
  Range xr, yr;
  bool log_y;

  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

std::string tick_label(double t, bool log_scale) { return log_scale ? "1e" + fmt(t) : fmt(t); }

void draw_axes(Canvas& c, const Frame& f, const std::string& title, const std::string& x_label,
               const std::string& y_label, bool x_ticks) {
  c.rect(f.x0, f.y0, f.w, f.h, "#333", "none");
  c.text(f.x0 + f.w / 2, f.y0 - 10, title, "middle", 14);
  if (x_ticks) {
    for (double t : ticks(f.xr, false)) {
      c.line(f.px(t), f.y0 + f.h, f.px(t), f.y0 + f.h + 5, "#333");
      c.text(f.px(t), f.y0 + f.h + 18, fmt(t), "middle", 11);
    }
  }
  for (double t : ticks(f.yr, f.log_y)) {
    c.line(f.x0 - 5, f.py(t), f.x0, f.py(t), "#333");
    c.line(f.x0, f.py(t), f.x0 + f.w, f.py(t), "#eee");
    c.text(f.x0 - 8, f.py(t) + 4, tick_label(t, f.log_y), "end", 11);
  }
  c.text(f.x0 + f.w / 2, f.y0 + f.h + 38, x_label, "middle", 12);
  const double ly = f.y0 + f.h / 2;
  c.text(f.x0 - 60, ly, y_label, "middle", 12,
         (" transform=\"rotate(-90 " + fmt(f.x0 - 60, 6) + " " + fmt(ly, 6) + ")\"").c_str());
}

double transform_y(double v, bool log_y) {
  if (!log_y) return v;
  return v > 0.0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return ec == std::errc() ? std::string(buf.data(), end) : std::string("nan");
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw std::logic_error("csv row width does not match header");
  rows.push_back(std::move(row));
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += quote_csv(cells[i]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << content;
  f.flush();
  if (!f) throw IoError("failed writing " + path.string());
}

std::string line_chart_svg(const std::string& title, const std::vector<Panel>& panels) {
  const double height = 30.0 + panels.size() * kPanelHeight;
  Canvas c(kWidth, height);
  c.text(kWidth / 2, 22, title, "middle", 16);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    Frame f{kLeft, 30.0 + p * kPanelHeight + kTop, kWidth - kLeft - kRight, kPanelHeight - kTop - kBottom, {}, {},
            panel.log_y};
    for (const auto& s : panel.series) {
      for (std::size_t k = 0; k < s.x.size(); ++k) {
        const double y = transform_y(s.y[k], panel.log_y);
        if (!std::isfinite(y)) continue;
        f.xr.include(s.x[k]);
        f.yr.include(y);
      }
    }
    f.xr.finish();
    f.yr.finish();
    draw_axes(c, f, panel.title, panel.x_label, panel.y_label, true);
    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const Series& s = panel.series[si];
      const char* colour = kPalette[si % kPalette.size()];
      std::vector<std::pair<double, double>> pts;
      for (std::size_t k = 0; k < s.x.size(); ++k) {
        const double y = transform_y(s.y[k], panel.log_y);
        if (!std::isfinite(y)) {
          c.polyline(pts, colour);
          pts.clear();
          continue;
        }
        pts.emplace_back(f.px(s.x[k]), f.py(y));
        if (s.markers) c.circle(f.px(s.x[k]), f.py(y), 3.0, colour);
      }
      c.polyline(pts, colour);
      const double ly = f.y0 + 12 + 16 * static_cast<double>(si);
      c.line(f.x0 + f.w + 10, ly - 4, f.x0 + f.w + 28, ly - 4, colour, 2.0);
      c.text(f.x0 + f.w + 32, ly, s.label, "start", 11);
    }
    for (std::size_t k = 0; k < panel.notes.size(); ++k) {
      c.text(f.x0 + 8, f.y0 + 16 + 15 * static_cast<double>(k), panel.notes[k], "start", 11);
    }
  }
  return c.finish();
}

std::string boxplot_svg(const std::string& title, const std::string& y_label, const std::vector<Box>& boxes,
                        bool log_y) {
  Canvas c(kWidth, kPanelHeight + 30.0);
  c.text(kWidth / 2, 22, title, "middle", 16);
  Frame f{kLeft, 30.0 + kTop, kWidth - kLeft - kRight, kPanelHeight - kTop - kBottom, {0.0, 1.0}, {}, log_y};
  for (const auto& b : boxes) {
    for (double v : {b.stats.min, b.stats.max}) f.yr.include(transform_y(v, log_y));
  }
  f.yr.finish();
  draw_axes(c, f, "", "", y_label, false);
  const double slot = f.w / static_cast<double>(std::max<std::size_t>(1, boxes.size()));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Quartiles& q = boxes[i].stats;
    const char* colour = kPalette[i % kPalette.size()];
    const double cx = f.x0 + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(40.0, slot * 0.3);
    const auto y = [&](double v) { return f.py(transform_y(v, log_y)); };
    c.text(cx, f.y0 + f.h + 20, boxes[i].label, "middle", 12);
    if (std::isnan(q.median)) continue;
    c.line(cx, y(q.whisker_low), cx, y(q.q1), "#333");
    c.line(cx, y(q.q3), cx, y(q.whisker_high), "#333");
    c.line(cx - half / 2, y(q.whisker_low), cx + half / 2, y(q.whisker_low), "#333");
    c.line(cx - half / 2, y(q.whisker_high), cx + half / 2, y(q.whisker_high), "#333");
    c.rect(cx - half, y(q.q3), 2 * half, y(q.q1) - y(q.q3), "#333", colour);
    c.line(cx - half, y(q.median), cx + half, y(q.median), "#000", 2.0);
    for (double o : q.outliers) {
      if (std::isfinite(transform_y(o, log_y))) c.circle(cx, y(o), 3.0, "#d62728");
    }
    c.text(cx + half + 4, y(q.median) + 4, "median " + fmt(q.median), "start", 10);
  }
  return c.finish();
}

}  // namespace vslam::cli
