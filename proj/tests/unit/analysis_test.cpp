#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "helix/analysis/clustering.hpp"
#include "helix/analysis/collision.hpp"
#include "helix/analysis/digram.hpp"
#include "helix/analysis/export.hpp"
#include "helix/analysis/helix_fit.hpp"
#include "helix/analysis/pca.hpp"
#include "helix/analysis/profile.hpp"
#include "helix/analysis/tsne.hpp"
#include "helix/numerics/ops.hpp"
#include "helix/numerics/rng.hpp"
#include "helix/posenc/positional_table.hpp"
#include "oracles.hpp"

using namespace helix::analysis;
namespace num = helix::numerics;
using helix::model::ProbePoint;
using helix::model::ProbeRecords;
using helix::corpus::PosTag;

namespace {

const ProbePoint kProbe{helix::model::ProbeKind::encoder_layer_out, 1};

ProbeRecords records_from(const std::vector<Matrix>& sentences, const std::vector<std::vector<int>>& tokens = {}) {
  ProbeRecords r;
  std::vector<double> data;
  std::size_t cols = sentences.front().cols();
  for (std::size_t s = 0; s < sentences.size(); ++s)
    for (std::size_t p = 0; p < sentences[s].rows(); ++p) {
      const auto row = sentences[s].row(p);
      data.insert(data.end(), row.begin(), row.end());
      r.sentence.push_back(s);
      r.position.push_back(p);
      r.token.push_back(tokens.empty() ? static_cast<int>(p) : tokens[s][p]);
      r.tag.push_back(PosTag::other);
    }
  r.vectors = Matrix(r.token.size(), cols, std::move(data));
  return r;
}

Matrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed, double s = 1.0) {
  num::Rng rng(seed);
  Matrix m(n, d);
  for (double& v : m.values()) v = s * rng.normal();
  return m;
}

/// Points scattered around the given centres.
Matrix blobs(const std::vector<std::vector<double>>& centres, std::size_t per, double spread, std::uint64_t seed,
             std::vector<int>* labels = nullptr) {
  num::Rng rng(seed);
  const std::size_t d = centres.front().size();
  Matrix m(centres.size() * per, d);
  for (std::size_t c = 0; c < centres.size(); ++c)
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t k = 0; k < d; ++k) m(c * per + i, k) = centres[c][k] + spread * rng.normal();
      if (labels) labels->push_back(static_cast<int>(c));
    }
  return m;
}

}  // namespace

TEST_CASE("distill_positions examples") {
  SUBCASE("identical sentences reproduce exactly") {
    const Matrix s = gaussian(6, 5, 1);
    const auto prof = distill_positions(records_from({s, s, s, s, s, s, s}), kProbe, 3);
    CHECK(prof.means == s);
    CHECK(prof.counts == std::vector<std::size_t>(6, 7));
  }
  SUBCASE("opposite vectors cancel") {
    const Matrix v = gaussian(1, 4, 2);
    const auto prof = distill_positions(records_from({v, num::scale(v, -1.0)}), kProbe, 1);
    for (double x : prof.means.values()) CHECK(x == 0.0);
  }
  SUBCASE("tail positions below min_count are truncated") {
    std::vector<Matrix> sents;
    for (std::size_t i = 0; i < 10; ++i) sents.push_back(gaussian(3 + i % 4, 2, 10 + i));
    const auto prof = distill_positions(records_from(sents), kProbe, 5);
    // Lengths 3,4,5,6,3,4,5,6,3,4: position 3 seen 7 times, position 4 seen 4 times.
    CHECK(prof.length() == 4);
    CHECK(prof.counts == std::vector<std::size_t>{10, 10, 10, 7});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(distill_positions(ProbeRecords{}, kProbe, 1), std::invalid_argument);
    CHECK_THROWS_AS(distill_positions(records_from({gaussian(3, 2, 1)}), kProbe, 2), std::invalid_argument);
  }
}

TEST_CASE("profile of positional rows plus symmetric semantics recovers the table") {
  const helix::posenc::PositionalTable pe(12, 16);
  const Matrix u = gaussian(4, 16, 3, 0.5);
  num::Rng rng(4);
  for (std::size_t n : {400u, 1600u}) {
    std::vector<Matrix> sents;
    for (std::size_t s = 0; s < n; ++s) {
      Matrix m = pe.rows(12);
      for (std::size_t p = 0; p < 12; ++p) {
        const std::size_t token = static_cast<std::size_t>(rng.below(8));
        const double sign = token < 4 ? 1.0 : -1.0;
        for (std::size_t c = 0; c < 16; ++c) m(p, c) += sign * u(token % 4, c);
      }
      sents.push_back(std::move(m));
    }
    const auto prof = distill_positions(records_from(sents), kProbe, 1);
    CHECK(num::max_abs_diff(prof.means, pe.rows(12)) < 5.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("delta_decompose") {
  std::vector<Matrix> sents;
  std::vector<std::vector<int>> toks;
  num::Rng rng(5);
  for (std::size_t s = 0; s < 30; ++s) {
    sents.push_back(gaussian(6, 4, 100 + s));
    std::vector<int> t;
    for (std::size_t p = 0; p < 6; ++p) t.push_back(static_cast<int>(4 + rng.below(6)));
    toks.push_back(t);
  }
  toks[0][0] = 99;  // appears once
  const auto rec = records_from(sents, toks);
  const auto prof = distill_positions(rec, kProbe, 1);
  const auto dv = delta_decompose(rec, prof);
  CHECK(dv.size() == rec.size());

  for (std::size_t p = 0; p < 6; ++p) {
    std::vector<double> sum(4, 0.0);
    for (std::size_t i = 0; i < dv.size(); ++i)
      if (dv.position[i] == p)
        for (std::size_t c = 0; c < 4; ++c) sum[c] += dv.single(i, c);
    for (double s : sum) CHECK(std::abs(s / 30.0) < 1e-12);
  }
  std::map<int, std::vector<double>> dsum;
  for (std::size_t i = 0; i < dv.size(); ++i) {
    auto& s = dsum[dv.token[i]];
    s.resize(4);
    for (std::size_t c = 0; c < 4; ++c) s[c] += dv.double_delta(i, c);
  }
  for (const auto& [t, s] : dsum)
    for (double v : s) CHECK(std::abs(v) < 1e-9);
  CHECK_FALSE(dv.semantic.contains(99));
  CHECK(dv.semantic.contains(5));
  for (std::size_t i = 0; i < dv.size(); ++i)
    if (dv.token[i] == 99)
      for (double v : dv.double_delta.row(i)) CHECK(v == 0.0);

  // Constant shift moves the profile, not the deltas.
  ProbeRecords shifted = rec;
  for (std::size_t i = 0; i < shifted.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) shifted.vectors(i, c) += 3.0 + static_cast<double>(c);
  const auto dv2 = delta_decompose(shifted, distill_positions(shifted, kProbe, 1));
  CHECK(num::max_abs_diff(dv.single, dv2.single) < 1e-12);

  const auto filtered = delta_decompose(rec, prof, [](int t) { return t % 2 == 0; });
  for (int t : filtered.token) CHECK(t % 2 == 0);

  PositionalProfile short_prof = prof;
  short_prof.means = num::slice_rows(prof.means, 0, 3);
  short_prof.counts.resize(3);
  const auto truncated = delta_decompose(rec, short_prof);
  CHECK(truncated.size() == 90);
  for (std::size_t p : truncated.position) CHECK(p < 3);
  CHECK(select_rows(rec.vectors, {2, 0}) == Matrix::from_rows({{rec.vectors(2, 0), rec.vectors(2, 1), rec.vectors(2, 2), rec.vectors(2, 3)},
                                                               {rec.vectors(0, 0), rec.vectors(0, 1), rec.vectors(0, 2), rec.vectors(0, 3)}}));
}

TEST_CASE("pca examples") {
  SUBCASE("collinear points") {
    Matrix x(10, 3);
    for (std::size_t i = 0; i < 10; ++i) {
      const double t = static_cast<double>(i) * 0.7 - 2.0;
      x(i, 0) = 1.0 + t;
      x(i, 1) = -2.0 * t;
      x(i, 2) = 0.5 * t;
    }
    const auto m = pca_fit(x, 2);
    CHECK(std::abs(m.explained_variance_ratio[0] - 1.0) < 1e-9);
  }
  SUBCASE("isotropic cross") {
    const Matrix x = Matrix::from_rows({{1, 0}, {-1, 0}, {0, 1}, {0, -1}});
    const auto m = pca_fit(x, 2);
    CHECK(std::abs(m.explained_variance_ratio[0] - 0.5) < 1e-12);
    CHECK(std::abs(m.explained_variance_ratio[1] - 0.5) < 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(pca_fit(gaussian(1, 3, 1), 1), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(gaussian(5, 3, 1), 4), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(gaussian(2, 3, 1), 3), std::invalid_argument);
    CHECK_THROWS_AS(pca_fit(gaussian(5, 3, 1), 0), std::invalid_argument);
  }
}

TEST_CASE("pca eigenvalues match the characteristic polynomial on 3x3 covariances") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Matrix x = num::matmul(gaussian(20, 3, seed), gaussian(3, 3, seed + 1000));
    const auto m = pca_fit(x, 3);
    const auto want = helix::test::symmetric3_eigenvalues(helix::test::covariance(x));
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(m.explained_variance[i] - want[i]) < 1e-8 * std::max(1.0, want[0]));
  }
}

TEST_CASE("pca invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = num::matmul(gaussian(40, 6, seed), gaussian(6, 6, seed + 50));
    const auto m = pca_fit(x, 6);
    const Matrix gram = num::matmul_nt(m.components, m.components);
    CHECK(num::max_abs_diff(gram, Matrix::identity(6)) < 1e-8);
    double sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(m.explained_variance_ratio[i] >= 0.0);
      sum += m.explained_variance_ratio[i];
      if (i > 0) CHECK(m.explained_variance[i] <= m.explained_variance[i - 1]);
      const auto row = m.components.row(i);
      const auto big = std::max_element(row.begin(), row.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
      CHECK(*big > 0.0);
    }
    CHECK(sum <= 1.0 + 1e-9);
    CHECK(std::abs(sum - 1.0) < 1e-9);
    const Matrix z = pca_transform(m, x);
    const Matrix cov = helix::test::covariance(z);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        if (i != j) CHECK(std::abs(cov(i, j)) < 1e-8 * std::max(1.0, cov(0, 0)));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(cov(i, i) - m.explained_variance[i]) < 1e-8 * std::max(1.0, cov(0, 0)));
    CHECK(num::max_abs_diff(pca_reconstruct(m, z), x) < 1e-8);
    CHECK(std::abs(m.share(3) - (m.explained_variance_ratio[0] + m.explained_variance_ratio[1] + m.explained_variance_ratio[2])) < 1e-15);
  }
}

TEST_CASE("helix_fit on synthetic curves") {
  auto sample = [](double radius, double pitch, std::size_t n, double phase) {
    Matrix m(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) + phase;
      m(i, 0) = radius * std::cos(t);
      m(i, 1) = radius * std::sin(t);
      m(i, 2) = pitch * t;
    }
    return m;
  };
  SUBCASE("exact helix") {
    const auto f = helix_fit(sample(1.0, 0.1, 21, 0.0));
    CHECK(f.residual_ratio < 1e-9);
    CHECK(f.axis_linearity > 0.999);
    CHECK(f.axis == 2);
    CHECK(std::abs(f.pitch - 0.1) < 1e-9);
    CHECK(std::abs(f.radius - 1.0) < 1e-9);
    CHECK(f.shape == CurveShape::helix);
  }
  SUBCASE("rotated and shifted helices recover pitch and radius within 1%") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      num::Rng rng(seed);
      const double radius = 0.5 + 3.0 * rng.uniform();
      const double pitch = 0.05 + 0.5 * rng.uniform();
      // Slower angular rate: 0.4 rad per step.
      Matrix m(30, 3);
      for (std::size_t i = 0; i < 30; ++i) {
        const double t = 0.4 * static_cast<double>(i);
        m(i, 0) = 5.0 + radius * std::cos(t);
        m(i, 1) = -1.0 + pitch * t;
        m(i, 2) = 2.0 + radius * std::sin(t);
      }
      const auto f = helix_fit(m);
      CHECK(f.axis == 1);
      CHECK(std::abs(f.pitch - pitch) < 0.01 * pitch);
      CHECK(std::abs(f.radius - radius) < 0.01 * radius);
      CHECK(std::abs(f.axis_step - 0.4 * pitch) < 0.01 * 0.4 * pitch);
      CHECK(f.shape == CurveShape::helix);
    }
  }
  SUBCASE("straight line is degenerate") {
    Matrix m(12, 3);
    for (std::size_t i = 0; i < 12; ++i) {
      m(i, 0) = static_cast<double>(i);
      m(i, 1) = 2.0 * static_cast<double>(i);
      m(i, 2) = -0.5 * static_cast<double>(i);
    }
    const auto f = helix_fit(m);
    CHECK(f.shape == CurveShape::degenerate);
  }
  SUBCASE("exact circle is a closed curve") {
    const auto f = helix_fit(sample(2.0, 0.0, 21, 0.0));
    CHECK(f.axis_linearity < 0.1);
    CHECK(f.residual_ratio < 1e-9);
    CHECK(f.shape == CurveShape::closed_curve);
    CHECK(to_string(f.shape) == "closed curve, not helix");
  }
  SUBCASE("noise raises the residual") {
    Matrix m = sample(1.0, 0.1, 21, 0.0);
    num::Rng rng(9);
    for (double& v : m.values()) v += 0.5 * rng.normal();
    const auto f = helix_fit(m);
    CHECK(f.residual_ratio > 0.1);
  }
  CHECK_THROWS_AS(helix_fit(Matrix(7, 3)), std::invalid_argument);
  CHECK_THROWS_AS(helix_fit(Matrix(9, 2)), std::invalid_argument);
}

TEST_CASE("polyline geometry") {
  Matrix arc(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / 19.0;
    arc(i, 0) = std::cos(t);
    arc(i, 1) = std::sin(t);
  }
  CHECK_FALSE(polyline_self_intersects(arc));
  CHECK(std::abs(endpoint_gap_ratio(arc) - 1.0) < 1e-12);
  // Figure eight through the origin at t = 0 and t = pi; no vertex lands on the crossing.
  Matrix eight(41, 2);
  for (std::size_t i = 0; i < 41; ++i) {
    const double t = -0.5 + (2.0 * std::numbers::pi - 0.5) * static_cast<double>(i) / 40.0;
    eight(i, 0) = std::sin(t);
    eight(i, 1) = std::sin(t) * std::cos(t);
  }
  CHECK(polyline_self_intersects(eight));
  Matrix loop(21, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / 20.0;
    loop(i, 0) = std::cos(t);
    loop(i, 1) = std::sin(t);
  }
  loop(20, 0) = loop(0, 0);
  loop(20, 1) = loop(0, 1);
  CHECK(endpoint_gap_ratio(loop) == 0.0);
  CHECK(polyline_self_intersects(Matrix::from_rows({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, -1}})));
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {5, 5, 5}) == 0.0);
}

TEST_CASE("kmeans_pp examples") {
  SUBCASE("two far pairs") {
    const Matrix x = Matrix::from_rows({{0, 0}, {0, 1}, {100, 0}, {100, 2}});
    const auto m = kmeans_pp(x, 2, {.seed = 3});
    CHECK(m.assignments[0] == m.assignments[1]);
    CHECK(m.assignments[2] == m.assignments[3]);
    CHECK(m.assignments[0] != m.assignments[2]);
    CHECK(std::abs(m.inertia - (2 * 0.25 + 2 * 1.0)) < 1e-12);
  }
  SUBCASE("k = n") {
    const auto m = kmeans_pp(gaussian(7, 3, 1), 7, {.seed = 1});
    CHECK(m.inertia == 0.0);
  }
  SUBCASE("duplicate points keep every cluster occupied") {
    const Matrix x = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}, {5, 5}});
    const auto m = kmeans_pp(x, 3, {.seed = 2, .n_init = 3});
    std::vector<int> size(3, 0);
    for (auto a : m.assignments) ++size[a];
    for (int s : size) CHECK(s > 0);
    CHECK(m.inertia == 0.0);
  }
  CHECK_THROWS_AS(kmeans_pp(gaussian(2, 2, 1), 3), std::invalid_argument);
}

TEST_CASE("kmeans_pp matches the exhaustive best 2-partition") {
  std::size_t matched = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    num::Rng rng(seed);
    const std::size_t n = 3 + static_cast<std::size_t>(rng.below(6));
    const Matrix x = gaussian(n, 2, seed + 7);
    const double best = helix::test::best_two_partition_inertia(x);
    const auto m = kmeans_pp(x, 2, {.seed = seed});
    CHECK(m.inertia >= best - 1e-12);
    if (std::abs(m.inertia - best) < 1e-9) ++matched;
  }
  CHECK(matched == 100);
}

TEST_CASE("kmeans_pp invariants") {
  std::vector<int> labels;
  const Matrix x = blobs({{0, 0, 0}, {4, 0, 1}, {0, 5, -2}, {3, 3, 3}}, 40, 1.0, 5, &labels);
  const auto m = kmeans_pp(x, 4, {.seed = 11});
  for (std::size_t i = 1; i < m.inertia_trace.size(); ++i) CHECK(m.inertia_trace[i] <= m.inertia_trace[i - 1] + 1e-9);
  CHECK(std::abs(m.inertia - inertia(x, m.centroids, m.assignments)) < 1e-9);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double own = 0.0;
    for (std::size_t c = 0; c < 3; ++c) own += std::pow(x(i, c) - m.centroids(m.assignments[i], c), 2);
    for (std::size_t j = 0; j < 4; ++j) {
      double other = 0.0;
      for (std::size_t c = 0; c < 3; ++c) other += std::pow(x(i, c) - m.centroids(j, c), 2);
      CHECK(own <= other + 1e-12);
    }
  }

  Matrix shifted = x;
  for (std::size_t i = 0; i < x.rows(); ++i) shifted(i, 1) += 17.0;
  CHECK(kmeans_pp(shifted, 4, {.seed = 11}).assignments == m.assignments);

  // Rotation about the first axis.
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Matrix rot = Matrix::from_rows({{1, 0, 0}, {0, c, s}, {0, -s, c}});
  const auto r = kmeans_pp(num::matmul(x, rot), 4, {.seed = 11});
  std::vector<int> as_int(m.assignments.begin(), m.assignments.end());
  CHECK(cluster_eval(r.assignments, as_int).ari == doctest::Approx(1.0));

  const auto a = kmeans_pp(x, 4, {.seed = 11, .threads = 4});
  CHECK(a.assignments == m.assignments);
  CHECK(a.inertia == m.inertia);
}

TEST_CASE("elbow_select") {
  SUBCASE("three blobs") {
    std::size_t votes = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Matrix x = blobs({{0, 0}, {10, 0}, {4, 9}}, 30, 0.8, seed);
      const auto e = elbow_select(x, 8, {.seed = seed});
      if (e.suggested_k == 3) ++votes;
      for (std::size_t k = 1; k < 8; ++k) CHECK(e.inertia[k] <= e.inertia[k - 1] + 1e-9);
    }
    CHECK(votes >= 6);
  }
  SUBCASE("single blob is low confidence") {
    const auto e = elbow_select(gaussian(200, 2, 3), 8, {.seed = 1});
    CHECK(e.low_confidence);
    CHECK_FALSE(e.boundary);
  }
  SUBCASE("k_max below the true count is a boundary") {
    // Six blobs at the vertices of a regular simplex: every merge costs the same.
    std::vector<std::vector<double>> centres(6, std::vector<double>(6, 0.0));
    for (std::size_t i = 0; i < 6; ++i) centres[i][i] = 20.0;
    const Matrix x = blobs(centres, 20, 0.5, 4);
    const auto e = elbow_select(x, 3, {.seed = 4});
    CHECK(e.suggested_k == 3);
    CHECK(e.boundary);
    const auto full = elbow_select(x, 8, {.seed = 4});
    CHECK(full.suggested_k == 6);
    CHECK_FALSE(full.boundary);
    CHECK_FALSE(full.low_confidence);
  }
  CHECK_THROWS_AS(elbow_select(gaussian(10, 2, 1), 2), std::invalid_argument);
}

TEST_CASE("silhouette") {
  SUBCASE("hand example on a line") {
    const Matrix x = Matrix::from_rows({{0}, {1}, {4}, {6}});
    const double want = (0.8 + 0.75 + 1.5 / 3.5 + 3.5 / 5.5) / 4.0;
    CHECK(std::abs(silhouette(x, {0, 0, 1, 1}) - want) < 1e-15);
  }
  SUBCASE("far pairs approach 1") {
    // Gap between the pairs is 100 times the within-pair spread.
    const Matrix x = Matrix::from_rows({{0, 0}, {1, 0}, {101, 0}, {102, 0}});
    CHECK(silhouette(x, {0, 0, 1, 1}) >= 0.99);
    const Matrix y = Matrix::from_rows({{0, 0}, {1, 0}, {1000, 0}, {1001, 0}});
    CHECK(silhouette(y, {0, 0, 1, 1}) > 0.998);
  }
  SUBCASE("identical points score 0") {
    CHECK(silhouette(Matrix(4, 2, 3.0), {0, 1, 0, 1}) == 0.0);
  }
  SUBCASE("singletons score 0") {
    const Matrix x = Matrix::from_rows({{0}, {1}, {10}});
    const double p0 = (10.0 - 1.0) / 10.0;
    const double p1 = (9.0 - 1.0) / 9.0;
    CHECK(std::abs(silhouette(x, {0, 0, 1}) - (p0 + p1) / 3.0) < 1e-15);
  }
  SUBCASE("range and separation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      num::Rng rng(seed);
      Matrix x = gaussian(30, 3, seed);
      std::vector<std::size_t> a(30);
      for (std::size_t i = 0; i < 30; ++i) a[i] = i < 3 ? i : static_cast<std::size_t>(rng.below(3));
      const double s = silhouette(x, a);
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
      Matrix apart = x;
      for (std::size_t i = 0; i < 30; ++i) apart(i, 0) += 5.0 * static_cast<double>(a[i]);
      CHECK(silhouette(apart, a) > s);
    }
  }
  CHECK_THROWS_AS(silhouette(gaussian(4, 2, 1), {0, 0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(silhouette(gaussian(4, 2, 1), {0, 2, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(silhouette(gaussian(4, 2, 1), {0, 1}), std::invalid_argument);
}

TEST_CASE("two_stage_clustering splits the marked cluster") {
  // Three groups; the third contains two sub-groups labelled 3 (marker) and 4.
  std::vector<int> labels;
  const Matrix x = blobs({{0, 0, 0, 0, 0}, {12, 0, 0, 0, 0}, {0, 12, 0, 0, 0}, {0, 12, 3, 0, 0}}, 25, 0.4, 8, &labels);
  for (int& l : labels) l = l == 2 ? 3 : l == 3 ? 4 : l;
  const auto r = two_stage_clustering(x, {.seed = 1}, &labels, 3);
  CHECK(r.members.size() == 50);
  std::vector<int> sub;
  for (auto i : r.members) sub.push_back(labels[i]);
  CHECK(cluster_eval(r.stage2.assignments, sub).purity == 1.0);
  CHECK(cluster_eval(r.stage1.assignments, std::vector<int>(labels.begin(), labels.end())).purity == doctest::Approx(0.75));

  const auto chosen = two_stage_clustering(x, {.seed = 1}, nullptr, 0, r.verboid);
  CHECK(chosen.members == r.members);
  CHECK_THROWS_AS(two_stage_clustering(x, {.seed = 1}), std::invalid_argument);
  const Matrix tiny = Matrix::from_rows({{0, 0}, {0, 0.1}, {10, 0}, {10, 0.1}, {0, 10}, {0.1, 10}});
  CHECK_THROWS_AS(two_stage_clustering(tiny, {.seed = 1}, nullptr, 0, 0), std::invalid_argument);
}

TEST_CASE("cluster_eval") {
  CHECK(cluster_eval({0, 0, 1, 1}, {0, 0, 1, 1}).ari == 1.0);
  CHECK(cluster_eval({0, 0, 1, 1}, {0, 0, 1, 1}).purity == 1.0);
  CHECK(cluster_eval({1, 1, 0, 0}, {0, 0, 1, 1}).ari == 1.0);
  CHECK(std::abs(cluster_eval({0, 0, 1, 2}, {0, 0, 1, 1}).ari - 0.5714285714285715) < 1e-12);
  CHECK(std::abs(cluster_eval({0, 1, 2, 3}, {0, 0, 0, 0}).ari) < 1e-12);
  const auto one = cluster_eval({0, 0, 0, 0, 0}, {1, 1, 1, 2, 3});
  CHECK(one.purity == doctest::Approx(0.6));
  num::Rng rng(3);
  std::vector<std::size_t> a;
  std::vector<int> t;
  for (std::size_t i = 0; i < 1000; ++i) {
    a.push_back(static_cast<std::size_t>(rng.below(4)));
    t.push_back(static_cast<int>(rng.below(3)));
  }
  CHECK(std::abs(cluster_eval(a, t).ari) < 0.05);
  CHECK_THROWS_AS(cluster_eval({0, 1}, {0}), std::invalid_argument);
}

TEST_CASE("digram_features") {
  const Matrix z = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}, {7, 8}, {1, 2}, {1, 2}});
  const auto d = digram_features(z, {0, 0, 0, 0, 1, 1}, {0, 1, 2, 3, 4, 5});
  CHECK(d.features.rows() == 4);
  CHECK(d.features.cols() == 4);
  CHECK(d.features == Matrix::from_rows({{1, 2, 3, 4}, {3, 4, 5, 6}, {5, 6, 7, 8}, {1, 2, 1, 2}}));
  CHECK(d.second == std::vector<std::size_t>{1, 2, 3, 5});
  const auto gap = digram_features(z, {0, 0, 0, 0, 1, 1}, {0, 1, 3, 4, 0, 2});
  CHECK(gap.features.rows() == 2);
  CHECK_THROWS_AS(digram_features(z, {0, 0, 0, 0, 0, 0}, {0, 0, 1, 2, 3, 4}), std::invalid_argument);
}

TEST_CASE("tsne") {
  SUBCASE("two blobs separate") {
    std::vector<int> labels;
    const Matrix x = blobs({std::vector<double>(10, 0.0), std::vector<double>(10, 8.0)}, 40, 1.0, 2, &labels);
    const auto r = tsne(x, {.perplexity = 15, .iterations = 500, .seed = 4});
    CHECK(r.final_kl() < r.initial_kl());
    for (const auto& [it, kl] : r.kl_trace) CHECK(std::isfinite(kl));
    double cen[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < 80; ++i)
      for (std::size_t c = 0; c < 2; ++c) cen[labels[i]][c] += r.embedding(i, c) / 40.0;
    double spread = 0.0;
    for (std::size_t i = 0; i < 80; ++i)
      spread += std::hypot(r.embedding(i, 0) - cen[labels[i]][0], r.embedding(i, 1) - cen[labels[i]][1]) / 80.0;
    CHECK(std::hypot(cen[0][0] - cen[1][0], cen[0][1] - cen[1][1]) > 3.0 * spread);
    const auto again = tsne(x, {.perplexity = 15, .iterations = 500, .seed = 4});
    CHECK(again.embedding == r.embedding);
    CHECK(again.kl_trace == r.kl_trace);
  }
  SUBCASE("equilateral triangle keeps its symmetry") {
    const Matrix x = Matrix::from_rows({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2.0}});
    const auto r = tsne(x, {.perplexity = 2.0, .iterations = 1000, .seed = 1, .strict = false});
    const auto& y = r.embedding;
    const double d01 = std::hypot(y(0, 0) - y(1, 0), y(0, 1) - y(1, 1));
    const double d02 = std::hypot(y(0, 0) - y(2, 0), y(0, 1) - y(2, 1));
    const double d12 = std::hypot(y(1, 0) - y(2, 0), y(1, 1) - y(2, 1));
    const double mean = (d01 + d02 + d12) / 3.0;
    for (double d : {d01, d02, d12}) CHECK(std::abs(d - mean) < 0.1 * mean);
    // Equidistant inputs give a uniform P, which any equilateral output matches.
    CHECK(std::abs(r.final_kl()) < 1e-9);
  }
  SUBCASE("joint probabilities") {
    const Matrix p = tsne_joint_probabilities(gaussian(30, 4, 6), 8.0);
    CHECK(std::abs(num::sum(p) - 1.0) < 1e-12);
    CHECK(num::max_abs_diff(p, num::transpose(p)) == 0.0);
  }
  SUBCASE("perplexity checks") {
    const Matrix x = gaussian(20, 3, 1);
    CHECK_THROWS_AS(tsne(x, {.perplexity = 7.0}), std::invalid_argument);
    CHECK_THROWS_AS(tsne(x, {.perplexity = 4.0}), std::invalid_argument);
    CHECK_THROWS_AS(tsne(x, {.perplexity = 19.5, .strict = false}), std::invalid_argument);
    CHECK_NOTHROW(tsne(x, {.perplexity = 6.0, .iterations = 10}));
  }
}

TEST_CASE("collision audit") {
  // 1-D mock: token value plus position value.
  Matrix v(4, 1);
  std::vector<GridKey> keys{{3, 6}, {4, 5}, {1, 1}, {1, 1}};
  v(0, 0) = 3 + 6;
  v(1, 0) = 4 + 5;
  v(2, 0) = 2;
  v(3, 0) = 2;
  const auto r = collision_audit(v, keys);
  CHECK(r.min_distance == 0.0);
  CHECK(r.argmin_a == GridKey{3, 6});
  CHECK(r.argmin_b == GridKey{4, 5});
  CHECK(r.pairs == 5);
  CHECK_THROWS_AS(collision_audit(Matrix(2, 1), {{1, 1}, {1, 1}}), std::invalid_argument);

  helix::model::TransformerConfig c;
  c.num_layers = 1;
  c.d_model = 8;
  c.num_heads = 2;
  c.d_ff = 16;
  c.source_vocab = 10;
  c.target_vocab = 10;
  c.source_combiner = helix::combiner::parse_combiner("linear-add");
  const helix::model::TransformerModel m(c, 3);
  const auto grid = combined_grid(m, true, {4, 5, 6}, 5);
  CHECK(grid.vectors.rows() == 15);
  CHECK(collision_audit(grid.vectors, grid.keys).min_distance > 0.0);
  const auto probe = helix::model::probe_run(
      m, {helix::corpus::TokenizedPair{0, {4, 5, 6, 5, 4}, {2, 3}, {}, {}}}, {{helix::model::ProbeKind::src_combined, 0}});
  const auto& rec = probe.at({helix::model::ProbeKind::src_combined, 0});
  for (std::size_t p = 0; p < 5; ++p) {
    const std::size_t row = static_cast<std::size_t>(rec.token[p] - 4) * 5 + p;
    const auto a = rec.vectors.row(p);
    const auto b = grid.vectors.row(row);
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
  }
}

TEST_CASE("csv export") {
  std::ostringstream out;
  helix::corpus::Vocab vocab;
  vocab.add("a,b");
  PointMeta meta;
  meta.token = {4, 4};
  meta.position = {0, 1};
  meta.tag = {PosTag::noun, PosTag::verb};
  meta.vocab = &vocab;
  write_points_csv(out, Matrix::from_rows({{0.5, 1}, {2, 3}}), meta);
  CHECK(out.str() == "sentence,position,token,word,tag,cluster,x0,x1\n,0,4,\"a,b\",noun,,0.5,1\n,1,4,\"a,b\",verb,,2,3\n");
  meta.cluster = {1};
  CHECK_THROWS_AS(write_points_csv(out, Matrix(2, 2), meta), std::invalid_argument);
  std::ostringstream m;
  write_matrix_csv(m, Matrix::from_rows({{1, 2}}));
  CHECK(m.str() == "row,x0,x1\n0,1,2\n");
}
