#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "htd/errors.hpp"

namespace htd::svg {
namespace {

constexpr double W = 640, H = 400, M = 48;

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return M + (x - x0) / (x1 - x0) * (W - 2 * M); }
  double py(double y) const { return H - M - (y - y0) / (y1 - y0) * (H - 2 * M); }
};

std::string header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n"
     << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  return os.str();
}

std::string axis_labels(const Frame& f, const std::string& ylab) {
  std::ostringstream os;
  os << "<text x=\"" << M << "\" y=\"" << H - M + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">" << f.x0
     << "</text>\n"
     << "<text x=\"" << W - M << "\" y=\"" << H - M + 16
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << f.x1 << "</text>\n"
     << "<text x=\"4\" y=\"" << M << "\" font-family=\"sans-serif\" font-size=\"11\">" << ylab << "</text>\n";
  return os.str();
}

void save(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << body << "</svg>\n";
}

}  // namespace

void write_histogram(const std::string& path, const Histogram& h, const std::string& title) {
  const std::size_t bins = h.counts_sim.size();
  if (bins == 0) throw ParameterError("empty histogram");
  double ns = 0, nd = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    ns += static_cast<double>(h.counts_sim[b]);
    nd += static_cast<double>(h.counts_data[b]);
  }
  auto density = [&](std::size_t c, double n, std::size_t b) {
    const double w = h.edges[b + 1] - h.edges[b];
    return n > 0 && w > 0 ? static_cast<double>(c) / (n * w) : 0.0;
  };
  double top = 0, bottom = 1e300;
  for (std::size_t b = 0; b < bins; ++b) {
    for (double v : {density(h.counts_sim[b], ns, b), density(h.counts_data[b], nd, b)}) {
      if (v > 0) {
        top = std::max(top, v);
        bottom = std::min(bottom, v);
      }
    }
  }
  if (top == 0) top = bottom = 1;
  const Frame f{h.edges.front(), h.edges.back() > h.edges.front() ? h.edges.back() : h.edges.front() + 1,
                std::log10(bottom) - 0.1, std::log10(top) + 0.1};
  std::ostringstream os;
  os << header(title) << axis_labels(f, "log10 density");
  auto line = [&](const std::vector<std::size_t>& counts, double n, const char* colour) {
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
    for (std::size_t b = 0; b < bins; ++b) {
      const double v = density(counts[b], n, b);
      const double y = f.py(v > 0 ? std::log10(v) : f.y0);
      os << f.px(h.edges[b]) << "," << y << " " << f.px(h.edges[b + 1]) << "," << y << " ";
    }
    os << "\"/>\n";
  };
  line(h.counts_data, nd, "#1f77b4");
  line(h.counts_sim, ns, "#d62728");
  os << "<text x=\"" << W - M - 4 << "\" y=\"" << M + 14
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">data</text>\n"
     << "<text x=\"" << W - M - 4 << "\" y=\"" << M + 28
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">generated</text>\n";
  save(path, os.str());
}

void write_series(const std::string& path, const std::vector<double>& x, const std::vector<double>& y,
                  const std::string& title) {
  if (x.size() != y.size() || x.empty()) throw ParameterError("series needs matching non-empty x and y");
  const auto [xl, xh] = std::minmax_element(x.begin(), x.end());
  const auto [yl, yh] = std::minmax_element(y.begin(), y.end());
  const Frame f{*xl, *xh > *xl ? *xh : *xl + 1, *yl, *yh > *yl ? *yh : *yl + 1};
  std::ostringstream os;
  os << header(title) << axis_labels(f, "") << "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) os << f.px(x[i]) << "," << f.py(y[i]) << " ";
  os << "\"/>\n";
  save(path, os.str());
}

}  // namespace htd::svg
