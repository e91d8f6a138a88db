#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "saf/data.hpp"
#include "saf/errors.hpp"

using namespace saf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST_CASE("noiseless canonical moons lie on the unit half-circles") {
  DomainSpec spec;
  spec.noise_sd = 0.0;
  spec.n_samples = 101;
  Batch b = gen_two_moons(spec);
  REQUIRE(b.size() == 101);
  std::size_t outer = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b.features(i, 0), y = b.features(i, 1);
    const int label = (*b.labels)[i];
    const double cx = label == 0 ? 0.0 : 1.0, cy = label == 0 ? 0.0 : 0.5;
    const double r = std::hypot(x - cx, y - cy);
    CHECK(r <= 1.0 + 1e-12);
    CHECK(std::abs(r - 1.0) <= 1e-12);
    outer += label == 0;
    CHECK(b.domain_tags[i] == kSourceDomain);
  }
  CHECK(outer == 50);
}

TEST_CASE("moons: determinism, periodic rotation, affine mean") {
  DomainSpec spec;
  spec.seed = 11;
  Batch a = gen_two_moons(spec), b = gen_two_moons(spec);
  CHECK(a.features == b.features);
  CHECK(*a.labels == *b.labels);

  DomainSpec full = spec;
  full.rotation_deg = 360.0;
  Batch c = gen_two_moons(full, kTargetDomain);
  for (std::size_t i = 0; i < a.features.size(); ++i) CHECK(std::abs(a.features[i] - c.features[i]) <= 1e-9);
  CHECK(c.domain_tags.front() == kTargetDomain);

  DomainSpec rot = spec;
  rot.rotation_deg = 35.0;
  Batch d = gen_two_moons(rot);
  double mx = 0, my = 0, rx = 0, ry = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mx += a.features(i, 0), my += a.features(i, 1);
    rx += d.features(i, 0), ry += d.features(i, 1);
  }
  const double th = 35.0 * std::numbers::pi / 180.0, n = static_cast<double>(a.size());
  CHECK(std::abs(rx / n - (std::cos(th) * mx / n - std::sin(th) * my / n)) <= 1e-9);
  CHECK(std::abs(ry / n - (std::sin(th) * mx / n + std::cos(th) * my / n)) <= 1e-9);
}

TEST_CASE("transform order is scale, rotate, translate") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    DomainSpec s;
    s.rotation_deg = u(g) * 60;
    s.scale = std::abs(u(g)) + 0.1;
    s.translation = {u(g), u(g)};
    const std::array<double, 2> p = {u(g), u(g)};
    const double th = s.rotation_deg * std::numbers::pi / 180.0;
    // Composed homogeneous matrix T * R * S.
    const double m00 = s.scale * std::cos(th), m01 = -s.scale * std::sin(th);
    const double m10 = s.scale * std::sin(th), m11 = s.scale * std::cos(th);
    const auto q = s.transform(p);
    CHECK(std::abs(q[0] - (m00 * p[0] + m01 * p[1] + s.translation[0])) <= 1e-12);
    CHECK(std::abs(q[1] - (m10 * p[0] + m11 * p[1] + s.translation[1])) <= 1e-12);
  }
}

TEST_CASE("domain spec validation") {
  DomainSpec s;
  s.n_samples = 1;
  CHECK_THROWS_AS(gen_two_moons(s), ConfigError);
  s = DomainSpec{};
  s.noise_sd = -0.1;
  CHECK_THROWS_AS(gen_two_moons(s), ConfigError);
  s = DomainSpec{};
  s.scale = 0.0;
  CHECK_THROWS_AS(gen_two_moons(s), ConfigError);
}

TEST_CASE("gaussian blobs: exact centres, balance, CLT bound") {
  DomainSpec s;
  s.generator = Generator::gaussian_blobs;
  s.noise_sd = 0.0;
  s.n_samples = 31;
  s.rotation_deg = 20.0;
  s.translation = {1.0, -2.0};
  const auto centers = default_blob_centers(3);
  Batch b = gen_gaussian_blobs(s, 3, centers);
  std::vector<std::size_t> counts(3, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const int y = (*b.labels)[i];
    ++counts[static_cast<std::size_t>(y)];
    const auto c = s.transform(centers[static_cast<std::size_t>(y)]);
    CHECK(b.features(i, 0) == doctest::Approx(c[0]).epsilon(1e-15));
    CHECK(b.features(i, 1) == doctest::Approx(c[1]).epsilon(1e-15));
  }
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);

  s.noise_sd = 0.3;
  s.n_samples = 600;
  s.seed = 5;
  Batch n = gen_gaussian_blobs(s, 3, centers);
  for (int k = 0; k < 3; ++k) {
    double sx = 0, sy = 0, cnt = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      if ((*n.labels)[i] == k) sx += n.features(i, 0), sy += n.features(i, 1), ++cnt;
    }
    const auto c = s.transform(centers[static_cast<std::size_t>(k)]);
    const double bound = 4.0 * 0.3 / std::sqrt(cnt);
    CHECK(std::abs(sx / cnt - c[0]) <= bound);
    CHECK(std::abs(sy / cnt - c[1]) <= bound);
  }

  std::vector<std::array<double, 2>> dup = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(gen_gaussian_blobs(s, 2, dup), ConfigError);
  CHECK_THROWS_AS(gen_gaussian_blobs(s, 1, std::span(centers).first(1)), ConfigError);
}

TEST_CASE("csv round trip and schema") {
  TempDir dir("saf_data_csv");
  Batch b;
  b.features = Matrix::from_rows({{0.1, 1.0 / 3.0}, {-2e-300, 12345.678901234567}});
  b.labels = std::vector<int>{1, 0};
  b.domain_tags = {kSourceDomain, kSourceDomain};
  save_csv(b, dir.file("a.csv"));
  Batch r = load_csv(dir.file("a.csv"), true);
  CHECK(r.features == b.features);
  CHECK(*r.labels == *b.labels);

  std::ifstream in(dir.file("a.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "f0,f1,label");

  Batch raw = load_csv(dir.file("a.csv"), false, kTargetDomain);
  CHECK(!raw.has_labels());
  CHECK(raw.width() == 3);
  CHECK(raw.features(0, 2) == 1.0);
  CHECK(raw.domain_tags == std::vector<int>{kTargetDomain, kTargetDomain});

  Batch unl = b.without_labels();
  save_csv(unl, dir.file("u.csv"));
  CHECK(load_csv(dir.file("u.csv"), false).features == b.features);
}

TEST_CASE("csv errors name the row") {
  TempDir dir("saf_data_err");
  write_file(dir.file("bad.csv"), "f0,f1,label\n0,1,0\n1,2,1\n1,x,0\n");
  try {
    load_csv(dir.file("bad.csv"), true);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  write_file(dir.file("ragged.csv"), "f0,f1,label\n0,1,0\n1,2\n");
  try {
    load_csv(dir.file("ragged.csv"), true);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  write_file(dir.file("label.csv"), "f0,label\n0,0\n1,5\n");
  CHECK_THROWS_AS(load_csv(dir.file("label.csv"), true, kSourceDomain, 2), ParseError);
  write_file(dir.file("frac.csv"), "f0,label\n0,0.5\n");
  CHECK_THROWS_AS(load_csv(dir.file("frac.csv"), true), ParseError);
  CHECK_THROWS_AS(load_csv(dir.file("none.csv"), true), IoError);
}

TEST_CASE("batch iterator partitions the data") {
  DomainSpec s;
  s.n_samples = 37;
  Batch data = gen_two_moons(s);
  Rng r1(4), r2(4);
  std::vector<Batch> a = batch_iterator(data, 8, true, r1), b = batch_iterator(data, 8, true, r2);
  REQUIRE(a.size() == 5);
  std::size_t total = 0;
  Batch joined = a.front();
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += a[i].size();
    CHECK(a[i].features == b[i].features);
    if (i > 0) joined = concat(joined, a[i]);
  }
  CHECK(total == 37);
  CHECK(a.back().size() == 5);
  CHECK(sorted_rows(joined.features) == sorted_rows(data.features));

  Rng r3(1);
  std::vector<Batch> one = batch_iterator(data, 100, true, r3);
  REQUIRE(one.size() == 1);
  CHECK(sorted_rows(one[0].features) == sorted_rows(data.features));

  Rng r4(1);
  std::vector<Batch> plain = batch_iterator(data, 10, false, r4);
  CHECK(plain[0].features(0, 0) == data.features(0, 0));
  CHECK_THROWS_AS(batch_iterator(data, 0, false, r4), ConfigError);
}

TEST_CASE("cycling loader emits full batches covering each epoch") {
  DomainSpec s;
  s.n_samples = 20;
  Batch data = gen_two_moons(s);
  CyclingLoader loader(data, 6, 9);
  std::vector<std::vector<double>> epoch;
  for (int i = 0; i < 3; ++i) {
    Batch b = loader.next();
    CHECK(b.size() == 6);
    for (std::size_t r = 0; r < b.size(); ++r) epoch.emplace_back(b.features.row(r).begin(), b.features.row(r).end());
  }
  std::sort(epoch.begin(), epoch.end());
  CHECK(std::adjacent_find(epoch.begin(), epoch.end()) == epoch.end());
  CHECK(loader.next().size() == 6);

  CyclingLoader small(data, 50, 1);
  CHECK(small.next().size() == 20);
  CyclingLoader a(data, 6, 3), b(data, 6, 3);
  for (int i = 0; i < 10; ++i) CHECK(a.next().features == b.next().features);
}

TEST_CASE("batch helpers") {
  DomainSpec s;
  s.n_samples = 6;
  Batch data = gen_two_moons(s);
  std::vector<std::size_t> rows = {4, 1};
  Batch sel = data.select(rows);
  CHECK(sel.features(0, 1) == data.features(4, 1));
  CHECK((*sel.labels)[1] == (*data.labels)[1]);
  std::vector<std::size_t> bad = {9};
  CHECK_THROWS_AS(data.select(bad), DataError);
  CHECK_THROWS_AS(data.without_labels().require_labels("x"), DataError);
  CHECK_NOTHROW(data.validate(2));
  Batch wrong = data;
  (*wrong.labels)[0] = 2;
  CHECK_THROWS_AS(wrong.validate(2), DataError);
  Batch three;
  three.features = Matrix(2, 3);
  three.domain_tags = {0, 0};
  CHECK_THROWS_AS(concat(data, three), ShapeError);
}
