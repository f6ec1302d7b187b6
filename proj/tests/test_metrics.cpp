#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tt/metrics.hpp"

using namespace tt;

namespace {

Contour make(std::vector<Point> pts, std::string id = "") {
  Contour c;
  c.points = std::move(pts);
  c.frame_id = std::move(id);
  return c;
}

Contour random_contour(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 128.0);
  Contour c;
  for (int i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng)});
  return c;
}

// Plain nearest-neighbor oracle, accumulated in the opposite order from the
// implementation.
double brute_force_msd(const Contour& u, const Contour& v) {
  double total = 0.0;
  for (auto pass = 0; pass < 2; ++pass) {
    const Contour& a = pass == 0 ? v : u;
    const Contour& b = pass == 0 ? u : v;
    for (auto it = a.points.rbegin(); it != a.points.rend(); ++it) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : b.points)
        best = std::min(best, std::hypot(it->x - q.x, it->y - q.y));
      total += best;
    }
  }
  return total / static_cast<double>(u.points.size() + v.points.size());
}

}  // namespace

TEST_CASE("msd worked examples") {
  const Contour a = make({{0, 0}, {1, 0}, {2, 0}});
  CHECK(msd(a, a) == doctest::Approx(0.0));
  CHECK(msd(make({{0, 0}}), make({{3, 4}})) == doctest::Approx(5.0));
  Contour u, v;
  for (int i = 0; i < 5; ++i) {
    u.points.push_back({static_cast<double>(i), 0.0});
    v.points.push_back({static_cast<double>(i), 2.0});
  }
  CHECK(msd(u, v) == doctest::Approx(2.0));
}

TEST_CASE("msd equals the brute-force oracle on random pairs") {
  std::mt19937 rng(77);
  for (int t = 0; t < 200; ++t) {
    const Contour u = random_contour(rng, 100);
    const Contour v = random_contour(rng, 100);
    CHECK(msd(u, v) == doctest::Approx(brute_force_msd(u, v)).epsilon(1e-12));
  }
}

TEST_CASE("msd symmetry, translation invariance, scale linearity") {
  std::mt19937 rng(78);
  for (int t = 0; t < 50; ++t) {
    const Contour u = random_contour(rng, 40);
    const Contour v = random_contour(rng, 60);  // unequal lengths too
    const double d = msd(u, v);
    CHECK(msd(v, u) == doctest::Approx(d).epsilon(1e-12));

    Contour ut = u, vt = v;
    for (auto& p : ut.points) { p.x += 12.5; p.y -= 3.25; }
    for (auto& p : vt.points) { p.x += 12.5; p.y -= 3.25; }
    CHECK(msd(ut, vt) == doctest::Approx(d).epsilon(1e-9));

    Contour us = u, vs = v;
    for (auto& p : us.points) { p.x *= 3.0; p.y *= 3.0; }
    for (auto& p : vs.points) { p.x *= 3.0; p.y *= 3.0; }
    CHECK(msd(us, vs) == doctest::Approx(3.0 * d).epsilon(1e-9));
  }
}

TEST_CASE("msd rejects empty contours") {
  CHECK_THROWS(msd(Contour{}, make({{1, 1}})));
}

TEST_CASE("summarize worked examples") {
  const std::vector<double> a{5, 5, 5};
  AggregateStats s = summarize(a);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.stddev == doctest::Approx(0.0));
  CHECK(s.median == doctest::Approx(5.0));
  CHECK(s.max == doctest::Approx(5.0));

  const std::vector<double> b{0, 10};
  s = summarize(b);
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.stddev == doctest::Approx(5.0));

  CHECK_THROWS(summarize(std::vector<double>{}));
}

TEST_CASE("summarize agrees with a second summation order") {
  std::mt19937 rng(79);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = u(rng);
  const AggregateStats s = summarize(xs);
  // reverse-order recomputation
  std::vector<double> rev(xs.rbegin(), xs.rend());
  const AggregateStats s2 = summarize(rev);
  CHECK(s.mean == doctest::Approx(s2.mean).epsilon(1e-12));
  CHECK(s.stddev == doctest::Approx(s2.stddev).epsilon(1e-12));
  CHECK(s.median == doctest::Approx(s2.median).epsilon(1e-12));
  CHECK(s.max == s2.max);
}

TEST_CASE("agreement matrix: symmetric, zero diagonal, analytic offset") {
  std::mt19937 rng(80);
  std::vector<Contour> a_set, b_set;
  for (int f = 0; f < 10; ++f) {
    Contour a = random_contour(rng, 30);
    a.frame_id = "f" + std::to_string(f);
    Contour b = a;
    for (auto& p : b.points) p.y += 3.0;  // vertical shift by 3 px
    a_set.push_back(a);
    b_set.push_back(b);
  }
  std::map<std::string, std::vector<Contour>> ann{{"A", a_set}, {"B", b_set}};
  const AgreementMatrix m = agreement_matrix(ann);
  REQUIRE(m.annotators.size() == 2);
  CHECK(m.cells[0][0].first == doctest::Approx(0.0));
  CHECK(m.cells[1][1].first == doctest::Approx(0.0));
  CHECK(m.cells[0][1].first == doctest::Approx(m.cells[1][0].first));
  // nearest point of a dense random cloud shifted vertically may be closer
  // than 3 px, so assert against the per-frame msd oracle instead
  std::vector<double> dists;
  for (int f = 0; f < 10; ++f) dists.push_back(msd(a_set[f], b_set[f]));
  const AggregateStats s = summarize(dists);
  CHECK(m.cells[0][1].first == doctest::Approx(s.mean).epsilon(1e-12));
  CHECK(m.cells[0][1].second == doctest::Approx(s.stddev).epsilon(1e-12));
}

TEST_CASE("agreement matrix on a straight-line fixture has exact offset") {
  // For x-aligned horizontal lines, the nearest point is the vertically
  // aligned one, so a 3 px shift gives exactly (3.0, 0.0).
  std::vector<Contour> a_set, b_set;
  for (int f = 0; f < 5; ++f) {
    Contour a;
    a.frame_id = "f" + std::to_string(f);
    for (int i = 0; i < 50; ++i) a.points.push_back({static_cast<double>(i), 40.0});
    Contour b = a;
    for (auto& p : b.points) p.y += 3.0;
    a_set.push_back(a);
    b_set.push_back(b);
  }
  const AgreementMatrix m = agreement_matrix({{"A", a_set}, {"B", b_set}});
  CHECK(m.cells[0][1].first == doctest::Approx(3.0));
  CHECK(m.cells[0][1].second == doctest::Approx(0.0));
}

TEST_CASE("agreement matrix rejects mismatched frame sets") {
  Contour a = make({{0, 0}, {1, 1}}, "f0");
  Contour b = make({{0, 0}, {1, 1}}, "f1");
  std::map<std::string, std::vector<Contour>> ann{{"A", {a}}, {"B", {b}}};
  CHECK_THROWS(agreement_matrix(ann));
}

TEST_CASE("evaluate_contours report in px and mm") {
  Contour gold;
  gold.frame_id = "f0";
  for (int i = 0; i < 20; ++i) gold.points.push_back({static_cast<double>(i), 50.0});
  Contour pred = gold;
  for (auto& p : pred.points) p.y += 4.0;
  const EvalReport rep = evaluate_contours({{pred, gold}}, 4.0);
  CHECK(rep.aggregate_px.mean == doctest::Approx(4.0));
  REQUIRE(rep.aggregate_mm.has_value());
  CHECK(rep.aggregate_mm->mean == doctest::Approx(1.0));
  CHECK(rep.per_frame[0].frame_id == "f0");
}
