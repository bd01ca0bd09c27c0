#include "rdsc/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rdsc {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string MetricsReport::to_csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    if (r.model_id.find_first_of(",\n") != std::string::npos || r.channel.find_first_of(",\n") != std::string::npos)
      throw ShapeError("metrics CSV: identifiers must not contain commas or newlines");
    out += r.model_id + "," + r.channel + "," + fmt("%g", r.snr_db) + "," + fmt("%g", r.noise_ratio) + "," +
           fmt("%.6f", r.bleu) + "," + fmt("%.6f", r.sim_score) + "," + std::to_string(r.n_sentences) + "," +
           std::to_string(r.seed) + "\n";
  }
  return out;
}

MetricsReport MetricsReport::from_csv(const std::string& text) {
  MetricsReport rep;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kHeader) throw ShapeError("metrics CSV line 1: unexpected header \"" + line + "\"");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw ShapeError("metrics CSV line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      MetricsRow r;
      r.model_id = f[0];
      r.channel = f[1];
      r.snr_db = std::stod(f[2]);
      r.noise_ratio = std::stod(f[3]);
      r.bleu = std::stod(f[4]);
      r.sim_score = std::stod(f[5]);
      r.n_sentences = std::stoull(f[6]);
      r.seed = std::stoull(f[7]);
      rep.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ShapeError("metrics CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (lineno == 0) throw ShapeError("metrics CSV: empty file");
  return rep;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string series_key(const MetricsRow& row) {
  return row.model_id + "/" + row.channel + "/" + fmt("%g", row.noise_ratio);
}

std::string render_svg(const MetricsReport& report, PlotMetric metric, const std::string& title) {
  if (report.rows.empty()) throw ShapeError("render_svg: empty report");
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = report.rows[0].snr_db, xmax = xmin;
  for (const auto& r : report.rows) {
    series[series_key(r)].emplace_back(r.snr_db, metric == PlotMetric::bleu ? r.bleu : r.sim_score);
    xmin = std::min(xmin, r.snr_db);
    xmax = std::max(xmax, r.snr_db);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  const double ymin = metric == PlotMetric::bleu ? 0.0 : -0.2, ymax = 1.0;

  const double W = 720, H = 460, L = 70, R = 220, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + (1.0 - (std::clamp(y, ymin, ymax) - ymin) / (ymax - ymin)) * ph; };
  static constexpr std::array<const char*, 8> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                     "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
    << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    o << "<line x1=\"" << L << "\" x2=\"" << L + pw << "\" y1=\"" << py(y) << "\" y2=\"" << py(y)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt("%.1f", y) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& r : report.rows) xs.push_back(r.snr_db);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    o << "<text x=\"" << px(x) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << fmt("%g", x)
      << "</text>\n";
  o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">SNR (dB)</text>\n";
  o << "<text transform=\"translate(18," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << (metric == PlotMetric::bleu ? "BLEU" : "similarity score") << "</text>\n";

  std::size_t idx = 0;
  for (auto& [key, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* color = colors[idx % colors.size()];
    o << "<g data-series=\"" << escape_xml(key) << "\">\n<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) o << (i ? " " : "") << px(pts[i].first) << ',' << py(pts[i].second);
    o << "\"/>\n";
    for (const auto& [x, y] : pts)
      o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = T + 14 + 18.0 * double(idx);
    o << "<line x1=\"" << L + pw + 14 << "\" x2=\"" << L + pw + 34 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << L + pw + 40 << "\" y=\"" << ly << "\">" << escape_xml(key) << "</text>\n</g>\n";
    ++idx;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace rdsc
