#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bevbench/harness.hpp"

namespace bevbench::harness {

using nlohmann::json;

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string metric_str(double v) { return fmt("%.6f", v); }
std::string severity_str(double v) { return fmt("%.12g", v); }

std::string csv_report(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "mode,occluded_sensor,severity,mAP,NDS";
  if (!rows.empty())
    for (const auto& [cls, ap] : rows.front().class_ap) out << ",ap_" << cls;
  out << "\n";
  for (const ReportRow& r : rows) {
    out << r.mode << "," << r.occluded_sensor << "," << severity_str(r.severity) << ","
        << metric_str(r.map) << "," << metric_str(r.nds);
    for (const auto& [cls, ap] : r.class_ap) out << "," << metric_str(ap);
    out << "\n";
  }
  return out.str();
}

std::string markdown_report(const std::vector<ReportRow>& rows) {
  // Group rows by (mode, occluded sensor); one table row per group with one
  // mAP/NDS column pair per severity.
  std::vector<std::pair<std::string, std::string>> groups;
  std::vector<double> severities;
  for (const ReportRow& r : rows) {
    const auto g = std::make_pair(r.mode, r.occluded_sensor);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(severities.begin(), severities.end(), r.severity) == severities.end())
      severities.push_back(r.severity);
  }
  std::sort(severities.begin(), severities.end());

  std::map<std::pair<std::string, std::string>, std::map<double, const ReportRow*>> table;
  for (const ReportRow& r : rows)
    table[{r.mode, r.occluded_sensor}][r.severity] = &r;

  std::ostringstream out;
  out << "# Occlusion sweep: mAP / NDS by severity\n\n";
  out << "| Sensors | Occluded |";
  for (double s : severities) out << " " << severity_str(s) << " mAP | " << severity_str(s)
                                  << " NDS |";
  out << "\n|---|---|";
  for (size_t i = 0; i < severities.size(); ++i) out << "---|---|";
  out << "\n";
  for (const auto& g : groups) {
    out << "| " << g.first << " | " << g.second << " |";
    for (double s : severities) {
      const auto& per_sev = table[g];
      const auto it = per_sev.find(s);
      if (it == per_sev.end())
        out << " - | - |";
      else
        out << " " << fmt("%.4f", it->second->map) << " | " << fmt("%.4f", it->second->nds)
            << " |";
    }
    out << "\n";
  }
  return out.str();
}

std::string json_report(const std::vector<ReportRow>& rows) {
  json j;
  j["format"] = "bevbench-report/1";
  json arr = json::array();
  for (const ReportRow& r : rows) {
    json jr;
    jr["mode"] = r.mode;
    jr["occluded_sensor"] = r.occluded_sensor;
    jr["severity"] = r.severity;
    jr["mAP"] = r.map;
    jr["NDS"] = r.nds;
    json aps = json::object();
    for (const auto& [cls, ap] : r.class_ap) aps[cls] = ap;
    jr["class_ap"] = std::move(aps);
    jr["scene_count"] = r.scene_count;
    jr["eval"] = json::parse(metrics::eval_result_to_json(r.eval));
    arr.push_back(std::move(jr));
  }
  j["rows"] = std::move(arr);
  return j.dump(2);
}

// Severity-vs-mAP chart, one polyline per (mode, occluded) group. Polylines
// live in a y-up coordinate group so their raw y values track mAP directly.
std::string svg_report(const std::vector<ReportRow>& rows) {
  constexpr double kW = 640, kH = 400;
  constexpr double kLeft = 60, kBottom = 40, kTop = 24, kRight = 150;
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf"};

  std::vector<std::pair<std::string, std::string>> groups;
  double smin = 0.0, smax = 0.0;
  bool first = true;
  for (const ReportRow& r : rows) {
    const auto g = std::make_pair(r.mode, r.occluded_sensor);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    smin = first ? r.severity : std::min(smin, r.severity);
    smax = first ? r.severity : std::max(smax, r.severity);
    first = false;
  }
  const double span = (smax > smin) ? (smax - smin) : 1.0;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  // Axes.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kH - kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight
      << "\" y2=\"" << kH - kBottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (kLeft + plot_w / 2) << "\" y=\"" << (kH - 8)
      << "\" font-size=\"13\" text-anchor=\"middle\">occlusion severity</text>\n";
  out << "<text x=\"16\" y=\"" << (kTop + plot_h / 2)
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (kTop + plot_h / 2) << ")\">mAP</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out << "<text x=\"" << (kLeft - 6) << "\" y=\"" << (kH - kBottom - v * plot_h + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << fmt("%.1f", v) << "</text>\n";
  }

  // y-up group: y = mAP * plot_h.
  out << "<g transform=\"translate(" << kLeft << "," << (kH - kBottom) << ") scale(1,-1)\">\n";
  int color = 0;
  for (const auto& g : groups) {
    std::vector<std::pair<double, double>> pts;
    for (const ReportRow& r : rows)
      if (r.mode == g.first && r.occluded_sensor == g.second)
        pts.emplace_back(r.severity, r.map);
    std::sort(pts.begin(), pts.end());
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[color % 7]
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      const double x = (pts[i].first - smin) / span * plot_w;
      const double y = pts[i].second * plot_h;
      out << (i ? " " : "") << fmt("%.2f", x) << "," << fmt("%.2f", y);
    }
    out << "\"/>\n";
    ++color;
  }
  out << "</g>\n";

  color = 0;
  for (const auto& g : groups) {
    out << "<text x=\"" << (kW - kRight + 10) << "\" y=\"" << (kTop + 16 + 18 * color)
        << "\" font-size=\"12\" fill=\"" << kPalette[color % 7] << "\">" << g.first
        << " (occluded: " << g.second << ")</text>\n";
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<ReportRow>& rows,
                                     const std::set<std::string>& formats,
                                     const std::string& out_dir) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  const auto emit = [&](const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    write_file(path, content);
    written.push_back(path);
  };
  if (formats.count("csv")) emit("report.csv", csv_report(rows));
  if (formats.count("markdown") || formats.count("md")) emit("report.md", markdown_report(rows));
  if (formats.count("json")) emit("report.json", json_report(rows));
  if (formats.count("svg")) emit("report.svg", svg_report(rows));
  return written;
}

}  // namespace bevbench::harness
