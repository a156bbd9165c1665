#include "oslab/report.hpp"

#include "oslab/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace oslab {

bool ExperimentReport::passed() const {
  if (failure || verdicts.empty()) return false;
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
}

std::string CsvTable::format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void CsvTable::add_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  for (double v : values) cells.push_back(format(v));
  add_row(cells);
}

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw std::invalid_argument("row width differs from header");
  rows_.push_back(cells);
}

std::string CsvTable::write(const std::string& path) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
  os << '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  const std::string text = os.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  return sha256_hex(text);
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["config_hash"] = r.config_hash;
  j["passed"] = r.passed();
  j["verdicts"] = nlohmann::json::array();
  for (const auto& v : r.verdicts)
    j["verdicts"].push_back({{"name", v.name},
                             {"value", v.value},
                             {"threshold", v.threshold},
                             {"relation", v.relation},
                             {"passed", v.passed},
                             {"note", v.note}});
  j["tables"] = nlohmann::json::array();
  for (const auto& t : r.tables) j["tables"].push_back({{"name", t.name}, {"path", t.path}, {"sha256", t.sha256}});
  j["plots"] = r.plots;
  j["notes"] = r.notes;
  j["failure"] = r.failure ? nlohmann::json(*r.failure) : nlohmann::json();
  // run metadata; not part of any hash
  j["run"] = {{"wall_seconds", r.wall_seconds}, {"workers", r.workers}, {"timestamp", r.timestamp}};
  return j;
}

void write_report(const std::string& path, const ExperimentReport& r, const nlohmann::json& config) {
  nlohmann::json j = to_json(r);
  j["config"] = config;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

namespace {

constexpr double kW = 640, kH = 420, kL = 70, kR = 150, kT = 40, kB = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Axis {
  double lo, hi;
  bool log;
  double map(double v, double a, double b) const {
    double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo))
                   : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

Axis make_axis(std::vector<double> vals, bool log) {
  vals.erase(std::remove_if(vals.begin(), vals.end(),
                            [log](double v) { return !std::isfinite(v) || (log && v <= 0.0); }),
             vals.end());
  if (vals.empty()) return {log ? 1.0 : 0.0, log ? 10.0 : 1.0, log};
  double lo = *std::min_element(vals.begin(), vals.end());
  double hi = *std::max_element(vals.begin(), vals.end());
  if (lo == hi) {
    if (log) {
      lo /= 2;
      hi *= 2;
    } else {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  return {lo, hi, log};
}

}  // namespace

void svg_line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                   const std::string& ylabel, const std::vector<PlotSeries>& series, bool log_x,
                   bool log_y) {
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      ys.push_back(s.y[i] + e);
      ys.push_back(log_y ? s.y[i] : s.y[i] - e);
    }
  }
  const Axis ax = make_axis(xs, log_x), ay = make_axis(ys, log_y);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n"
     << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\"" << kH - kT - kB
     << "\" fill=\"none\" stroke=\"black\"/>\n"
     << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << esc(xlabel) << "</text>\n"
     << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (kT + kH - kB) / 2 << ")\" text-anchor=\"middle\">" << esc(ylabel) << "</text>\n";
  char buf[64];
  for (int t = 0; t <= 4; ++t) {
    const double fx = ax.log ? std::pow(10.0, std::log10(ax.lo) + t * (std::log10(ax.hi) - std::log10(ax.lo)) / 4)
                             : ax.lo + t * (ax.hi - ax.lo) / 4;
    const double fy = ay.log ? std::pow(10.0, std::log10(ay.lo) + t * (std::log10(ay.hi) - std::log10(ay.lo)) / 4)
                             : ay.lo + t * (ay.hi - ay.lo) / 4;
    std::snprintf(buf, sizeof(buf), "%.3g", fx);
    os << "<text x=\"" << ax.map(fx, kL, kW - kR) << "\" y=\"" << kH - kB + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", fy);
    os << "<text x=\"" << kL - 6 << "\" y=\"" << ay.map(fy, kH - kB, kT) + 3
       << "\" text-anchor=\"end\" font-size=\"10\">" << buf << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 7];
    std::ostringstream pts;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      const double x = series[s].x[i], y = series[s].y[i];
      if (!std::isfinite(x) || !std::isfinite(y) || (log_x && x <= 0) || (log_y && y <= 0)) continue;
      const double px = ax.map(x, kL, kW - kR), py = ay.map(y, kH - kB, kT);
      pts << px << ',' << py << ' ';
      os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      if (i < series[s].err.size() && series[s].err[i] > 0) {
        const double lo = log_y ? std::max(y - series[s].err[i], ay.lo) : y - series[s].err[i];
        os << "<line x1=\"" << px << "\" x2=\"" << px << "\" y1=\"" << ay.map(lo, kH - kB, kT) << "\" y2=\""
           << ay.map(y + series[s].err[i], kH - kB, kT) << "\" stroke=\"" << color << "\"/>\n";
      }
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    os << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 14 + 16 * s << "\" font-size=\"11\" fill=\"" << color
       << "\">" << esc(series[s].label) << "</text>\n";
  }
  os << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << os.str();
}

void svg_heatmap(const std::string& path, const std::string& title, const ScalarGrid& g) {
  if (g.grid.dim() == 1) {
    PlotSeries s{"value", {}, {}, {}};
    for (std::size_t c = 0; c < g.grid.size(); ++c) {
      s.x.push_back(g.grid.center(c)(0));
      s.y.push_back(g.values[c]);
    }
    svg_line_plot(path, title, "x", "value", {s}, false, false);
    return;
  }
  const int nx = g.grid.cells(0), ny = g.grid.cells(1);
  const double lo = g.min(), hi = g.max();
  const double pw = (kW - kL - kR) / nx, ph = (kH - kT - kB) / ny;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  // first two axes only; higher axes are sliced at index 0
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double v = g.values[g.grid.flatten({i, j, 0})];
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const int r = static_cast<int>(255 * std::clamp(1.5 * t, 0.0, 1.0));
      const int gg = static_cast<int>(255 * std::clamp(1.5 * t - 0.5, 0.0, 1.0));
      const int b = static_cast<int>(255 * std::clamp(0.6 - t, 0.0, 1.0));
      os << "<rect x=\"" << kL + i * pw << "\" y=\"" << kH - kB - (j + 1) * ph << "\" width=\"" << pw + 0.2
         << "\" height=\"" << ph + 0.2 << "\" fill=\"rgb(" << r << ',' << gg << ',' << b << ")\"/>\n";
    }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "min %.4g  max %.4g", lo, hi);
  os << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 14 << "\" font-size=\"11\">" << buf << "</text>\n";
  os << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << os.str();
}

}  // namespace oslab
