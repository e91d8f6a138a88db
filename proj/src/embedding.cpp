#include "saf/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "saf/errors.hpp"

namespace saf {

Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) throw DataError("covariance: need at least 2 rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j);
  for (double& m : mu) m /= static_cast<double>(n);
  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = x(i, a) - mu[a];
      for (std::size_t b = a; b < d; ++b) cov(a, b) += da * (x(i, b) - mu[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }
  }
  return cov;
}

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

// Removes the components along the already-found directions.
void orthogonalise(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * b[i];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * b[i];
  }
}

void sign_normalise(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (double& e : v) e = -e;
  }
}

// Deterministic start vector that is not orthogonal to the remaining
// eigenspace; falls back to unit vectors if the mixed one is.
std::vector<double> start_vector(std::size_t d, const std::vector<std::vector<double>>& basis) {
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i) + 0.01 * static_cast<double>(i * i);
  orthogonalise(v, basis);
  for (std::size_t k = 0; norm(v) < 1e-8 && k < d; ++k) {
    std::fill(v.begin(), v.end(), 0.0);
    v[k] = 1.0;
    orthogonalise(v, basis);
  }
  const double nv = norm(v);
  for (double& e : v) e /= nv;
  return v;
}

}  // namespace

PcaResult pca(const Matrix& x, const PcaOptions& options) {
  if (x.rows() < 3) throw DataError("pca: need at least 3 samples, got " + std::to_string(x.rows()));
  const std::size_t d = x.cols();
  if (options.components == 0 || options.components > d) {
    throw ConfigError("pca: component count must lie in [1, " + std::to_string(d) + "]");
  }
  const Matrix cov = covariance(x);
  std::vector<std::vector<double>> basis;
  PcaResult r;
  for (std::size_t c = 0; c < options.components; ++c) {
    std::vector<double> v = start_vector(d, basis);
    std::vector<double> w(d);
    double lambda = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < d; ++b) s += cov(a, b) * v[b];
        w[a] = s;
      }
      orthogonalise(w, basis);
      const double nw = norm(w);
      if (nw < std::numeric_limits<double>::min()) {
        lambda = 0.0;
        break;
      }
      double diff = 0.0, dot = 0.0;
      for (std::size_t a = 0; a < d; ++a) dot += w[a] * v[a];
      const double sign = dot < 0.0 ? -1.0 : 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        w[a] = sign * w[a] / nw;
        diff = std::max(diff, std::abs(w[a] - v[a]));
      }
      v.swap(w);
      lambda = sign * nw;
      if (diff < options.tolerance) break;
    }
    sign_normalise(v);
    basis.push_back(v);
    r.eigenvalues.push_back(lambda);
  }

  r.mean = Matrix(1, d);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += x(i, j);
  for (std::size_t j = 0; j < d; ++j) r.mean[j] /= static_cast<double>(x.rows());
  r.directions = Matrix(d, options.components);
  for (std::size_t c = 0; c < options.components; ++c)
    for (std::size_t a = 0; a < d; ++a) r.directions(a, c) = basis[c][a];
  r.projected = Matrix(x.rows(), options.components);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < options.components; ++c) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += (x(i, a) - r.mean[a]) * basis[c][a];
      r.projected(i, c) = s;
    }
  }
  return r;
}

namespace {

const char* kSourceShades[] = {"#d62728", "#ff7f0e", "#e377c2", "#8c564b", "#ff9896"};
const char* kTargetShades[] = {"#1f77b4", "#17becf", "#9467bd", "#2ca02c", "#aec7e8"};

}  // namespace

std::string render_scatter_svg(std::span<const ScatterPoint> points, const std::string& title) {
  constexpr double W = 640.0, H = 480.0, pad = 40.0;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const auto& p : points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double sx = x1 > x0 ? (W - 2 * pad) / (x1 - x0) : 1.0;
  const double sy = y1 > y0 ? (H - 2 * pad) / (y1 - y0) : 1.0;

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                W, H, W, H);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string escaped;
  for (char c : title) {
    switch (c) {
      case '<': escaped += "&lt;"; break;
      case '>': escaped += "&gt;"; break;
      case '&': escaped += "&amp;"; break;
      default: escaped += c;
    }
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">", pad);
  out += buf;
  out += escaped + "</text>\n";
  for (const auto& p : points) {
    const double cx = pad + (p.x - x0) * sx;
    const double cy = H - pad - (p.y - y0) * sy;
    const std::size_t shade = static_cast<std::size_t>(std::max(p.label, 0)) % 5;
    if (p.domain == 0) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                    cx, cy, kSourceShades[shade]);
    } else {
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.3f\" y=\"%.3f\" width=\"5\" height=\"5\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                    cx - 2.5, cy - 2.5, kTargetShades[shade]);
    }
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace saf
