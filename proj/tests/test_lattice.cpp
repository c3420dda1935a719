#include <doctest.h>

#include <random>

#include "perronlab/lattice.hpp"
#include "perronlab/problem.hpp"

using namespace perronlab;

namespace {

std::shared_ptr<const Grid> small_grid(int nt = 4, int nx = 5) {
  return std::make_shared<const Grid>(Grid::uniform(1.0, Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0), nt, nx));
}

GridFn random_fn(std::shared_ptr<const Grid> g, std::mt19937& rng, int levels = 0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> k(0, levels - 1);
  Eigen::MatrixXd v(g->nt(), g->space_size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = levels ? k(rng) * 0.25 : u(rng);
  return GridFn(g, v, Regularity::Continuous);
}

}  // namespace

TEST_CASE("grid construction and indexing") {
  CHECK_THROWS(Grid(Eigen::Vector2d(0.0, 1.0), {Eigen::Vector2d(0.0, 1.0)}));
  CHECK_THROWS(Grid(Eigen::Vector2d(0.5, 1.0), {Eigen::Vector3d(0.0, 0.5, 1.0)}));
  CHECK_THROWS(Grid(Eigen::Vector2d(0.0, 1.0), {Eigen::Vector3d(0.0, 0.5, 0.5)}));
  CHECK_THROWS(Grid(Eigen::VectorXd::Zero(1), {Eigen::Vector3d(0.0, 0.5, 1.0)}));
  Grid g = Grid::uniform(2.0, Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 3), 3, 4);
  CHECK(g.space_size() == 16);
  CHECK(g.t(2) == 2.0);
  CHECK(g.stride(1) == 4);
  for (int s = 0; s < g.space_size(); ++s) CHECK(g.flatten(g.unflatten(s)) == s);
  CHECK(g.on_space_boundary(0));
  CHECK_FALSE(g.on_space_boundary(g.flatten({1, 2})));
  CHECK(g.point(g.flatten({3, 3}))(1) == 3.0);
  CHECK(g.uniform_space());
}

TEST_CASE("interpolation reproduces nodes and affine functions, clamps outside") {
  auto g = std::make_shared<const Grid>(Grid::uniform(1.0, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 2), 3, 5));
  Eigen::MatrixXd v(g->nt(), g->space_size());
  for (int k = 0; k < g->nt(); ++k)
    for (int s = 0; s < g->space_size(); ++s) {
      Eigen::VectorXd x = g->point(s);
      v(k, s) = 1 + 2 * g->t(k) - x(0) + 3 * x(1);
    }
  GridFn f(g, v, Regularity::Continuous);
  bool c = true;
  double x[2] = {0.3, 1.1};
  CHECK(f.interpolate(0.7, x, &c) == doctest::Approx(1 + 1.4 - 0.3 + 3.3));
  CHECK_FALSE(c);
  double y[2] = {0.5, 5.0};
  CHECK(f.interpolate(0.5, y, &c) == doctest::Approx(1 + 1 - 0.5 + 6));
  CHECK(c);
}

TEST_CASE("pointwise inf and sup") {
  auto g = small_grid();
  FnFamily two{{GridFn::constant(g, 5), GridFn::constant(g, 3)}, "consts"};
  CHECK(pointwise_inf(two).values == GridFn::constant(g, 3).values);
  CHECK(pointwise_sup(two).values == GridFn::constant(g, 5).values);
  CHECK(pointwise_inf(two).tag == Regularity::USC);
  CHECK(pointwise_sup(two).tag == Regularity::LSC);
  std::mt19937 rng(1);
  FnFamily fam;
  for (int i = 0; i < 50; ++i) fam.members.push_back(random_fn(g, rng));
  GridFn inf = pointwise_inf(fam), sup = pointwise_sup(fam);
  FnFamily neg;
  for (const auto& m : fam.members) neg.members.push_back(-m);
  CHECK(sup.values == (-pointwise_inf(neg)).values);
  for (Eigen::Index n = 0; n < inf.values.size(); ++n) {
    double lo = 1e300, hi = -1e300;
    for (const auto& m : fam.members) {
      lo = std::min(lo, m.values.data()[n]);
      hi = std::max(hi, m.values.data()[n]);
    }
    CHECK(inf.values.data()[n] == lo);
    CHECK(sup.values.data()[n] == hi);
  }
  FnFamily one{{fam.members[0]}, "single"};
  CHECK(pointwise_inf(one).values == fam.members[0].values);
  FnFamily bigger = fam;
  bigger.members.push_back(random_fn(g, rng));
  CHECK((pointwise_inf(bigger).values.array() <= inf.values.array()).all());
}

TEST_CASE("sublevel sets are strict and monotone") {
  auto g = small_grid();
  CHECK(sublevel_set(GridFn::constant(g, 0), 1).nodes.size() == static_cast<std::size_t>(g->size()));
  CHECK(sublevel_set(GridFn::constant(g, 0), 0).nodes.empty());
  std::mt19937 rng(2);
  GridFn f = random_fn(g, rng);
  NodeSet a = sublevel_set(f, 0.5), b = sublevel_set(f, 0.6);
  std::vector<long> brute;
  for (long n = 0; n < g->size(); ++n)
    if (f.values(n / g->space_size(), n % g->space_size()) < 0.5) brute.push_back(n);
  CHECK(a.nodes == brute);
  CHECK(std::includes(b.nodes.begin(), b.nodes.end(), a.nodes.begin(), a.nodes.end()));
}

TEST_CASE("countable selection") {
  auto g = small_grid();
  FnFamily two{{GridFn::constant(g, 3), GridFn::constant(g, 5)}, "consts"};
  Selection s = countable_selection(two, {4.0});
  CHECK(s.indices == std::vector<int>{0});
  FnFamily one{{GridFn::constant(g, 2)}, "one"};
  CHECK(countable_selection(one).indices == std::vector<int>{0});

  std::mt19937 rng(3);
  FnFamily steps;
  for (int i = 0; i < 20; ++i) steps.members.push_back(random_fn(g, rng, 5));
  Selection sel = countable_selection(steps);
  CHECK(sel.indices.size() <= 20);
  Eigen::MatrixXd inf = steps.members[sel.indices[0]].values;
  for (int i : sel.indices) inf = inf.cwiseMin(steps.members[i].values);
  CHECK(inf == pointwise_inf(steps).values);

  // a single coarse level forces enlargement
  Selection coarse = countable_selection(steps, {10.0});
  Eigen::MatrixXd inf2 = steps.members[coarse.indices[0]].values;
  for (int i : coarse.indices) inf2 = inf2.cwiseMin(steps.members[i].values);
  CHECK(inf2 == pointwise_inf(steps).values);
  CHECK(coarse.enlargements >= 1);
}
