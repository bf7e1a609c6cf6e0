#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssgp {

struct Dataset {
  Eigen::VectorXd t;
  Eigen::VectorXd y;
  std::string source;
  std::string binning;  // empty unless produced by bin_events
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

}  // namespace detail

// Two-column (t, y) CSV, headered or headerless. The grid must already be
// strictly increasing; out-of-order rows are an error, not an auto-sort.
inline Dataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);

  std::vector<double> ts, ys;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, extra;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                               ": expected two columns");
    if (std::getline(ss, extra, ','))
      throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                               ": extra columns");
    double t, y;
    if (!detail::parse_double(a, t) || !detail::parse_double(b, y)) {
      if (row == 1 && ts.empty()) continue;  // header line
      throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                               ": not numeric");
    }
    if (!std::isfinite(t) || !std::isfinite(y))
      throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                               ": non-finite value");
    if (!ts.empty() && t <= ts.back())
      throw std::runtime_error("ingest_csv: row " + std::to_string(row) +
                               ": time not strictly increasing");
    ts.push_back(t);
    ys.push_back(y);
  }
  Dataset d;
  d.t = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  d.source = path;
  return d;
}

// Counts events into equal-width bins over [t0, t1]; t holds bin centers.
inline Dataset bin_events(const std::vector<double>& events, double t0, double t1,
                          int n_bins) {
  if (n_bins <= 0) throw std::invalid_argument("bin_events: n_bins must be > 0");
  if (t0 >= t1) throw std::invalid_argument("bin_events: empty range");
  int outside = 0;
  for (double e : events)
    if (e < t0 || e > t1) ++outside;
  if (outside > 0)
    throw std::invalid_argument("bin_events: " + std::to_string(outside) +
                                " events outside [t0, t1]");
  const double width = (t1 - t0) / n_bins;
  Dataset d;
  d.t.resize(n_bins);
  d.y = Eigen::VectorXd::Zero(n_bins);
  for (int i = 0; i < n_bins; ++i) d.t[i] = t0 + (i + 0.5) * width;
  for (double e : events) {
    int idx = static_cast<int>((e - t0) / width);
    if (idx == n_bins) idx = n_bins - 1;  // right boundary
    d.y[idx] += 1.0;
  }
  d.binning = std::to_string(n_bins) + " bins over [" + std::to_string(t0) +
              ", " + std::to_string(t1) + "]";
  return d;
}

}  // namespace ssgp
