#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gradcheck.hpp"
#include "saf/embedding.hpp"
#include "saf/errors.hpp"

using namespace saf;
using namespace saf::test;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<long>(i), static_cast<long>(j)) = m(i, j);
  }
  return e;
}

}  // namespace

TEST_CASE("covariance matches the dense formula") {
  std::mt19937_64 g(1);
  Matrix x = random_matrix(9, 4, g, -3, 3);
  Eigen::MatrixXd e = to_eigen(x);
  Eigen::MatrixXd centred = e.rowwise() - e.colwise().mean();
  Eigen::MatrixXd expect = centred.transpose() * centred / 8.0;
  Matrix c = covariance(x);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(c(i, j) - expect(static_cast<long>(i), static_cast<long>(j))) <= 1e-12);
  }
}

TEST_CASE("power iteration matches a dense eigensolver on 5-point sets") {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + trial % 4;
    Matrix x = random_matrix(5, d, g, -2, 2);
    // Stretch the first axis so the spectrum has a clear gap.
    for (std::size_t i = 0; i < 5; ++i) x(i, 0) *= 3.0;
    PcaResult r = pca(x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(covariance(x)));
    for (std::size_t c = 0; c < 2; ++c) {
      const long col = static_cast<long>(d - 1 - c);
      const double lambda = es.eigenvalues()(col);
      CHECK(std::abs(r.eigenvalues[c] - lambda) <= 1e-8 * std::max(1.0, lambda));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += r.directions(j, c) * es.eigenvectors()(static_cast<long>(j), col);
      const double sign = dot < 0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(r.directions(j, c) - sign * es.eigenvectors()(static_cast<long>(j), col)) <= 1e-8);
      }
    }
  }
}

TEST_CASE("projection is centred and isometric for centred 2D data") {
  std::mt19937_64 g(3);
  Matrix x = random_matrix(30, 2, g, -2, 2);
  for (std::size_t i = 0; i < 30; ++i) x(i, 1) *= 0.4;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 30; ++i) mx += x(i, 0), my += x(i, 1);
  for (std::size_t i = 0; i < 30; ++i) x(i, 0) -= mx / 30, x(i, 1) -= my / 30;
  PcaResult r = pca(x);
  double px = 0, py = 0;
  for (std::size_t i = 0; i < 30; ++i) px += r.projected(i, 0), py += r.projected(i, 1);
  CHECK(std::abs(px / 30) <= 1e-10);
  CHECK(std::abs(py / 30) <= 1e-10);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = i + 1; j < 30; ++j) {
      const double a = std::hypot(x(i, 0) - x(j, 0), x(i, 1) - x(j, 1));
      const double b = std::hypot(r.projected(i, 0) - r.projected(j, 0), r.projected(i, 1) - r.projected(j, 1));
      CHECK(std::abs(a - b) <= 1e-8);
    }
  }
  double dot = 0, n0 = 0, n1 = 0;
  for (std::size_t j = 0; j < 2; ++j) {
    dot += r.directions(j, 0) * r.directions(j, 1);
    n0 += r.directions(j, 0) * r.directions(j, 0);
    n1 += r.directions(j, 1) * r.directions(j, 1);
  }
  CHECK(std::abs(dot) <= 1e-10);
  CHECK(std::abs(n0 - 1) <= 1e-12);
  CHECK(std::abs(n1 - 1) <= 1e-12);
}

TEST_CASE("pca sign convention and errors") {
  std::mt19937_64 g(4);
  Matrix x = random_matrix(12, 3, g);
  PcaResult r = pca(x);
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < 3; ++j) {
      if (std::abs(r.directions(j, c)) > std::abs(r.directions(arg, c))) arg = j;
    }
    CHECK(r.directions(arg, c) > 0.0);
  }
  CHECK(pca(x).projected == r.projected);
  CHECK_THROWS_AS(pca(Matrix(2, 3)), DataError);
  PcaOptions too_many;
  too_many.components = 4;
  CHECK_THROWS(pca(x, too_many));
}

TEST_CASE("scatter svg distinguishes domains") {
  std::vector<ScatterPoint> pts = {{0, 0, 0, 0}, {1, 1, 0, 1}, {2, -1, 1, 0}, {-1, 2, 1, 1}};
  const std::string svg = render_scatter_svg(pts, "emb");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t circles = 0, rects = 0;
  for (std::size_t p = 0; (p = svg.find("<circle", p)) != std::string::npos; ++p) ++circles;
  for (std::size_t p = 0; (p = svg.find("<rect", p)) != std::string::npos; ++p) ++rects;
  CHECK(circles >= 2);
  CHECK(rects >= 2);
  CHECK(svg.find("emb") != std::string::npos);
}
