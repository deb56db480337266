#include "gpfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace gpfl {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FairnessStats fairness(std::span<const double> client_acc) {
  if (client_acc.size() < 2)
    throw EmptyInputError("fairness: need at least 2 clients");
  double mean = 0.0;
  for (double a : client_acc) mean += a;
  mean /= static_cast<double>(client_acc.size());
  double var = 0.0;
  for (double a : client_acc) var += (a - mean) * (a - mean);
  var /= static_cast<double>(client_acc.size());
  FairnessStats fs;
  fs.stddev = std::sqrt(var);
  fs.cv = mean > 0.0 ? fs.stddev / mean
                     : std::numeric_limits<double>::quiet_NaN();
  return fs;
}

BestRound best_round(std::span<const RoundRecord> records) {
  if (records.empty()) throw EmptyInputError("best_round: no records");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].mean_acc > records[best].mean_acc) best = i;
  BestRound out;
  out.round = records[best].round;
  out.mean_acc = records[best].mean_acc;
  out.fairness = fairness(records[best].client_acc);
  return out;
}

void write_records_csv(std::span<const RoundRecord> records,
                       const std::string& path) {
  if (records.empty()) throw EmptyInputError("write_records_csv: no records");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv: " + path);
  out << "round,mean_acc,loss_p,loss_alg,loss_mlg";
  for (std::size_t i = 0; i < records[0].client_acc.size(); ++i)
    out << ",acc_client_" << i;
  out << '\n';
  for (const RoundRecord& r : records) {
    out << r.round << ',' << format_g17(r.mean_acc) << ','
        << format_g17(r.loss_p) << ',' << format_g17(r.loss_alg) << ','
        << format_g17(r.loss_mlg);
    for (double a : r.client_acc) out << ',' << format_g17(a);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<RoundRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty csv");
  std::vector<RoundRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 5) throw ParseError(path + ": short row");
    RoundRecord r;
    r.round = std::stoull(cells[0]);
    r.mean_acc = std::stod(cells[1]);
    r.loss_p = std::stod(cells[2]);
    r.loss_alg = std::stod(cells[3]);
    r.loss_mlg = std::stod(cells[4]);
    for (std::size_t i = 5; i < cells.size(); ++i)
      r.client_acc.push_back(std::stod(cells[i]));
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

constexpr int kWidth = 960;
constexpr int kHeight = 540;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 60;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

double plot_x(std::size_t i, std::size_t n) {
  if (n <= 1) return kMarginLeft;
  return kMarginLeft + (kWidth - kMarginLeft - kMarginRight) *
                           static_cast<double>(i) / static_cast<double>(n - 1);
}

double plot_y(double v, double lo, double hi) {
  if (hi <= lo) hi = lo + 1.0;
  double t = (v - lo) / (hi - lo);
  return kHeight - kMarginBottom -
         t * (kHeight - kMarginTop - kMarginBottom);
}

void polyline(std::ostream& out, const std::vector<double>& xs,
              const std::vector<double>& ys, const char* color) {
  out << "  <polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out << ' ';
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", xs[i], ys[i]);
    out << buf;
  }
  out << "\"/>\n";
}

}  // namespace

void write_accuracy_chart_svg(std::span<const RoundRecord> records,
                              const std::string& path) {
  if (records.empty())
    throw EmptyInputError("write_accuracy_chart_svg: no records");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write svg: " + path);

  double loss_max = 0.0;
  for (const auto& r : records) {
    double total = r.loss_p + r.loss_alg + r.loss_mlg;
    loss_max = std::max(loss_max, total);
  }
  if (loss_max <= 0.0) loss_max = 1.0;

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes
  out << "  <line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop
      << "\" x2=\"" << kMarginLeft << "\" y2=\"" << kHeight - kMarginBottom
      << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << kWidth - kMarginRight << "\" y1=\"" << kMarginTop
      << "\" x2=\"" << kWidth - kMarginRight << "\" y2=\""
      << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << kMarginLeft << "\" y1=\""
      << kHeight - kMarginBottom << "\" x2=\"" << kWidth - kMarginRight
      << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 4; ++i) {
    double frac = i / 4.0;
    double y = plot_y(frac, 0.0, 1.0);
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%d\" y=\"%.1f\" font-size=\"12\" "
                  "text-anchor=\"end\">%.2f</text>\n",
                  kMarginLeft - 6, y + 4, frac);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%d\" y=\"%.1f\" font-size=\"12\">%.2f</text>\n",
                  kWidth - kMarginRight + 6, y + 4, frac * loss_max);
    out << buf;
  }

  std::vector<double> xs, acc_y, loss_y;
  for (std::size_t i = 0; i < records.size(); ++i) {
    xs.push_back(plot_x(i, records.size()));
    acc_y.push_back(plot_y(records[i].mean_acc, 0.0, 1.0));
    loss_y.push_back(plot_y(
        records[i].loss_p + records[i].loss_alg + records[i].loss_mlg, 0.0,
        loss_max));
  }
  polyline(out, xs, acc_y, "#1f77b4");
  polyline(out, xs, loss_y, "#d62728");

  out << "  <text x=\"" << kMarginLeft << "\" y=\"24\" font-size=\"14\">"
      << "mean accuracy (blue, left) and training loss (red, right) by round"
      << "</text>\n";
  out << "  <rect x=\"" << kWidth - 250 << "\" y=\"34\" width=\"12\" "
      << "height=\"12\" fill=\"#1f77b4\"/>\n"
      << "  <text x=\"" << kWidth - 232
      << "\" y=\"44\" font-size=\"12\">mean accuracy</text>\n"
      << "  <rect x=\"" << kWidth - 250 << "\" y=\"52\" width=\"12\" "
      << "height=\"12\" fill=\"#d62728\"/>\n"
      << "  <text x=\"" << kWidth - 232
      << "\" y=\"62\" font-size=\"12\">training loss</text>\n";
  out << "  <text x=\"" << (kWidth / 2)
      << "\" y=\"" << kHeight - 14
      << "\" font-size=\"12\" text-anchor=\"middle\">round</text>\n";
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

void write_bar_chart_svg(std::span<const std::string> labels,
                         std::span<const double> values,
                         const std::string& title, const std::string& path) {
  if (labels.size() != values.size() || labels.empty())
    throw DimensionError("write_bar_chart_svg: labels/values mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write svg: " + path);
  double vmax = *std::max_element(values.begin(), values.end());
  if (vmax <= 0.0) vmax = 1.0;

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <text x=\"" << kMarginLeft << "\" y=\"24\" font-size=\"14\">"
      << title << "</text>\n";
  const double band =
      static_cast<double>(kWidth - kMarginLeft - kMarginRight) /
      static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double h = (values[i] / vmax) * (kHeight - kMarginTop - kMarginBottom);
    double x = kMarginLeft + band * static_cast<double>(i) + band * 0.15;
    double y = kHeight - kMarginBottom - h;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "  <rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" "
                  "height=\"%.1f\" fill=\"#1f77b4\"/>\n",
                  x, y, band * 0.7, h);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.1f\" y=\"%d\" font-size=\"11\" "
                  "text-anchor=\"middle\">%s</text>\n",
                  x + band * 0.35, kHeight - kMarginBottom + 16,
                  labels[i].c_str());
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.4f</text>\n",
                  x + band * 0.35, y - 4, values[i]);
    out << buf;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gpfl
