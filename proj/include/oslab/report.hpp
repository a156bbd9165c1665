#pragma once

#include "oslab/grid.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace oslab {

struct Verdict {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // how value is compared with threshold, e.g. "<=", "<", "=="
  bool passed = false;
  std::string note;
};

struct TableFile {
  std::string name;
  std::string path;
  std::string sha256;
};

struct ExperimentReport {
  std::string experiment;
  std::string config_hash;
  std::vector<Verdict> verdicts;
  std::vector<TableFile> tables;
  std::vector<std::string> plots;
  std::vector<std::string> notes;
  std::optional<std::string> failure;  // mid-run error; report is partial
  double wall_seconds = 0.0;
  int workers = 1;
  std::string timestamp;
  std::string output_dir;

  bool passed() const;
};

// CSV with fixed numeric formatting so equal results give equal bytes.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(const std::vector<double>& values);
  void add_row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_.size(); }
  // Writes the file and returns its SHA-256.
  std::string write(const std::string& path) const;
  static std::string format(double v);

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

nlohmann::json to_json(const ExperimentReport& r);
void write_report(const std::string& path, const ExperimentReport& r, const nlohmann::json& config);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional error bars
};

void svg_line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                   const std::string& ylabel, const std::vector<PlotSeries>& series, bool log_x,
                   bool log_y);
// Colour map of a 2-d grid; 1-d grids are drawn as a curve.
void svg_heatmap(const std::string& path, const std::string& title, const ScalarGrid& g);

}  // namespace oslab
