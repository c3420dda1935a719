#include "perronlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "perronlab/problem.hpp"

namespace perronlab {

namespace {

void check_increasing(const Eigen::VectorXd& v, const char* what) {
  for (int i = 1; i < v.size(); ++i)
    if (!(v(i) > v(i - 1))) throw std::invalid_argument(std::string(what) + " nodes must be strictly increasing");
  for (int i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i))) throw std::invalid_argument(std::string(what) + " nodes must be finite");
}

}  // namespace

Grid::Grid(Eigen::VectorXd time_nodes, std::vector<Eigen::VectorXd> space_nodes)
    : time_(std::move(time_nodes)), space_(std::move(space_nodes)) {
  if (time_.size() < 2) throw std::invalid_argument("grid needs at least 2 time nodes");
  if (time_(0) != 0.0) throw std::invalid_argument("time grid must start at 0");
  check_increasing(time_, "time");
  if (space_.empty()) throw std::invalid_argument("grid needs at least one space dimension");
  space_size_ = 1;
  for (const auto& s : space_) {
    if (s.size() < 3) throw std::invalid_argument("grid needs at least 3 space nodes per dimension");
    check_increasing(s, "space");
    stride_.push_back(space_size_);
    space_size_ *= static_cast<int>(s.size());
  }
}

Grid Grid::uniform(double T, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int nt, int nx) {
  if (nt < 2 || nx < 3) throw std::invalid_argument("uniform grid needs nt >= 2 and nx >= 3");
  Eigen::VectorXd time = Eigen::VectorXd::LinSpaced(nt, 0.0, T);
  time(nt - 1) = T;
  std::vector<Eigen::VectorXd> space;
  for (int j = 0; j < lo.size(); ++j) {
    Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(nx, lo(j), hi(j));
    s(0) = lo(j);
    s(nx - 1) = hi(j);
    space.push_back(s);
  }
  return Grid(time, space);
}

Grid Grid::uniform(const Problem& p, int nt, int nx) { return uniform(p.T(), p.lo(), p.hi(), nt, nx); }

std::vector<int> Grid::unflatten(int s) const {
  std::vector<int> idx(space_.size());
  for (std::size_t j = 0; j < space_.size(); ++j) {
    idx[j] = s % static_cast<int>(space_[j].size());
    s /= static_cast<int>(space_[j].size());
  }
  return idx;
}

int Grid::flatten(const std::vector<int>& idx) const {
  int s = 0;
  for (std::size_t j = 0; j < space_.size(); ++j) s += idx[j] * stride_[j];
  return s;
}

Eigen::VectorXd Grid::point(int s) const {
  Eigen::VectorXd x(dim());
  point(s, x.data());
  return x;
}

void Grid::point(int s, double* out) const {
  for (std::size_t j = 0; j < space_.size(); ++j) {
    int n = static_cast<int>(space_[j].size());
    out[j] = space_[j](s % n);
    s /= n;
  }
}

bool Grid::on_space_boundary(int s) const {
  for (std::size_t j = 0; j < space_.size(); ++j) {
    int n = static_cast<int>(space_[j].size());
    int i = s % n;
    if (i == 0 || i == n - 1) return true;
    s /= n;
  }
  return false;
}

bool Grid::uniform_space() const {
  for (const auto& s : space_) {
    double h = s(1) - s(0);
    for (int i = 2; i < s.size(); ++i)
      if (std::fabs((s(i) - s(i - 1)) - h) > 1e-9 * std::max(1.0, std::fabs(h))) return false;
  }
  return true;
}

double Grid::dx(int j) const { return space_[j](1) - space_[j](0); }

bool Grid::operator==(const Grid& o) const {
  if (time_.size() != o.time_.size() || space_.size() != o.space_.size()) return false;
  if (time_ != o.time_) return false;
  for (std::size_t j = 0; j < space_.size(); ++j)
    if (space_[j].size() != o.space_[j].size() || space_[j] != o.space_[j]) return false;
  return true;
}

const char* to_string(Regularity r) {
  switch (r) {
    case Regularity::USC: return "USC";
    case Regularity::LSC: return "LSC";
    case Regularity::Continuous: return "continuous";
    default: return "unknown";
  }
}

GridFn::GridFn(std::shared_ptr<const Grid> g, Eigen::MatrixXd v, Regularity r)
    : grid(std::move(g)), values(std::move(v)), tag(r) {
  if (!grid) throw std::invalid_argument("grid function needs a grid");
  if (values.rows() != grid->nt() || values.cols() != grid->space_size())
    throw std::invalid_argument("grid function shape does not match grid");
  if (!values.allFinite()) throw std::invalid_argument("grid function values must be finite");
}

GridFn GridFn::constant(std::shared_ptr<const Grid> g, double c, Regularity r) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(g->nt(), g->space_size(), c);
  return GridFn(std::move(g), std::move(v), r);
}

namespace {

// Cell index and weight of the right node along one axis, clamped.
void locate(const Eigen::VectorXd& nodes, double v, int& cell, double& w, bool& clamped) {
  const int n = static_cast<int>(nodes.size());
  if (v <= nodes(0)) {
    clamped = clamped || v < nodes(0);
    cell = 0;
    w = 0.0;
    return;
  }
  if (v >= nodes(n - 1)) {
    clamped = clamped || v > nodes(n - 1);
    cell = n - 2;
    w = 1.0;
    return;
  }
  const double* begin = nodes.data();
  int hi = static_cast<int>(std::upper_bound(begin, begin + n, v) - begin);
  cell = hi - 1;
  w = (v - nodes(cell)) / (nodes(cell + 1) - nodes(cell));
}

}  // namespace

double GridFn::interpolate(double t, const double* x, bool* clamped) const {
  const Grid& g = *grid;
  bool space_clamped = false;
  bool time_clamped = false;
  int kc = 0;
  double wt = 0.0;
  locate(g.time(), t, kc, wt, time_clamped);
  const int d = g.dim();
  int cells[16];
  double ws[16];
  if (d > 16) throw std::invalid_argument("interpolation supports at most 16 dimensions");
  for (int j = 0; j < d; ++j) locate(g.space(j), x[j], cells[j], ws[j], space_clamped);
  if (clamped) *clamped = space_clamped;
  double result = 0.0;
  for (int tk = 0; tk < 2; ++tk) {
    double tw = tk ? wt : 1.0 - wt;
    if (tw == 0.0) continue;
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = 1.0;
      int s = 0;
      for (int j = 0; j < d; ++j) {
        int bit = (corner >> j) & 1;
        w *= bit ? ws[j] : 1.0 - ws[j];
        s += (cells[j] + bit) * g.stride(j);
      }
      if (w != 0.0) acc += w * values(kc + tk, s);
    }
    result += tw * acc;
  }
  return result;
}

GridFn operator-(const GridFn& f) {
  Regularity r = f.tag;
  if (r == Regularity::USC) r = Regularity::LSC;
  else if (r == Regularity::LSC) r = Regularity::USC;
  return GridFn(f.grid, -f.values, r);
}

const Grid& FnFamily::grid() const {
  if (members.empty()) throw std::invalid_argument("family must be non-empty");
  return *members.front().grid;
}

namespace {

void check_family(const FnFamily& fam) {
  if (fam.members.empty()) throw std::invalid_argument("family must be non-empty");
  const auto& g0 = fam.members.front().grid;
  for (const auto& m : fam.members)
    if (m.grid != g0 && !(*m.grid == *g0)) throw std::invalid_argument("family members must share one grid");
}

Regularity envelope_tag(const FnFamily& fam, Regularity want) {
  for (const auto& m : fam.members)
    if (m.tag != want && m.tag != Regularity::Continuous) return Regularity::Unknown;
  return want;
}

}  // namespace

GridFn pointwise_inf(const FnFamily& fam) {
  check_family(fam);
  Eigen::MatrixXd v = fam.members.front().values;
  for (std::size_t i = 1; i < fam.members.size(); ++i) v = v.cwiseMin(fam.members[i].values);
  return GridFn(fam.members.front().grid, std::move(v), envelope_tag(fam, Regularity::USC));
}

GridFn pointwise_sup(const FnFamily& fam) {
  check_family(fam);
  Eigen::MatrixXd v = fam.members.front().values;
  for (std::size_t i = 1; i < fam.members.size(); ++i) v = v.cwiseMax(fam.members[i].values);
  return GridFn(fam.members.front().grid, std::move(v), envelope_tag(fam, Regularity::LSC));
}

NodeSet sublevel_set(const GridFn& f, double q) {
  NodeSet out;
  const long ns = f.values.cols();
  for (long k = 0; k < f.values.rows(); ++k)
    for (long s = 0; s < ns; ++s)
      if (f.values(k, s) < q) out.nodes.push_back(k * ns + s);
  return out;
}

std::vector<double> default_rationals(const FnFamily& fam) {
  check_family(fam);
  std::vector<double> vals;
  for (const auto& m : fam.members) vals.insert(vals.end(), m.values.data(), m.values.data() + m.values.size());
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  std::vector<double> qs;
  for (std::size_t i = 1; i < vals.size(); ++i) {
    double mid = vals[i - 1] + 0.5 * (vals[i] - vals[i - 1]);
    qs.push_back(mid > vals[i - 1] ? mid : vals[i]);
  }
  if (qs.empty()) qs.push_back(vals.empty() ? 0.0 : vals.back());
  return qs;
}

namespace {

// First-fit cover for every level at once. Member m enters the cover of level
// q at node n exactly when it is the first member with value below q there,
// i.e. when m strictly improves the running minimum at n and q lies in
// (f_m(n), previous minimum].
std::vector<char> cover(const FnFamily& fam, const std::vector<double>& qs) {
  const std::size_t nm = fam.members.size();
  const long nn = fam.members.front().values.size();
  std::vector<char> chosen(nm, 0);
  for (long n = 0; n < nn; ++n) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < nm; ++m) {
      double v = fam.members[m].values.data()[n];
      if (!(v < prev)) continue;
      auto it = std::upper_bound(qs.begin(), qs.end(), v);
      if (it != qs.end() && *it <= prev) chosen[m] = 1;
      prev = v;
    }
  }
  return chosen;
}

}  // namespace

Selection countable_selection(const FnFamily& fam, std::vector<double> rationals) {
  check_family(fam);
  if (rationals.empty()) throw std::invalid_argument("rationals must be non-empty");
  std::sort(rationals.begin(), rationals.end());
  rationals.erase(std::unique(rationals.begin(), rationals.end()), rationals.end());

  Selection sel;
  const GridFn target = pointwise_inf(fam);
  const long nn = target.values.size();
  for (;;) {
    std::vector<char> chosen = cover(fam, rationals);
    sel.indices.clear();
    for (std::size_t m = 0; m < chosen.size(); ++m)
      if (chosen[m]) sel.indices.push_back(static_cast<int>(m));
    if (sel.indices.empty()) sel.indices.push_back(0);

    Eigen::MatrixXd inf = fam.members[sel.indices.front()].values;
    for (std::size_t i = 1; i < sel.indices.size(); ++i) inf = inf.cwiseMin(fam.members[sel.indices[i]].values);
    if (inf == target.values) break;

    // Add a level just above the infimum at every node that is still wrong.
    std::vector<double> extra;
    for (long n = 0; n < nn; ++n) {
      double v = target.values.data()[n];
      if (inf.data()[n] == v) continue;
      double next = std::numeric_limits<double>::infinity();
      for (const auto& m : fam.members) {
        double w = m.values.data()[n];
        if (w > v) next = std::min(next, w);
      }
      double mid = v + 0.5 * (next - v);
      extra.push_back(mid > v ? mid : next);
    }
    rationals.insert(rationals.end(), extra.begin(), extra.end());
    std::sort(rationals.begin(), rationals.end());
    rationals.erase(std::unique(rationals.begin(), rationals.end()), rationals.end());
    ++sel.enlargements;
  }
  sel.rationals = std::move(rationals);
  return sel;
}

Selection countable_selection(const FnFamily& fam) { return countable_selection(fam, default_rationals(fam)); }

}  // namespace perronlab
