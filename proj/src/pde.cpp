#include "perronlab/pde.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace perronlab {

SmoothFn::SmoothFn(const Expr& e) : u(e), u_t(differentiate(e, 0)) {
  const int d = e.dim();
  for (int i = 0; i < d; ++i) u_x.push_back(differentiate(e, i + 1));
  u_xx.resize(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) u_xx[i * d + j] = differentiate(u_x[i], j + 1);
}

GeneratorEval apply_generator(const Problem& p, const SmoothFn& u, double t, const Eigen::VectorXd& x) {
  const int d = p.d();
  if (u.u.dim() != d || x.size() != d) throw std::invalid_argument("dimension mismatch in apply_generator");
  GeneratorEval ev;
  ev.u_t = u.u_t(t, x);
  for (int i = 0; i < d; ++i) ev.drift += p.data().b[i](t, x) * u.u_x[i](t, x);
  Eigen::MatrixXd a = p.covariance(t, x);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (a(i, j) != 0.0) ev.diffusion += 0.5 * a(i, j) * u.u_xx[i * d + j](t, x);
  ev.residual = -ev.u_t - ev.drift - ev.diffusion;
  return ev;
}

GeneratorEval apply_generator(const Problem& p, const Expr& u, double t, const Eigen::VectorXd& x) {
  return apply_generator(p, SmoothFn(u), t, x);
}

bool residual_node(const Grid& g, int k, int s) { return k < g.nt() - 1 && !g.on_space_boundary(s); }

namespace {

// Finite-difference generator with coefficients b (d) and a (d x d, row major).
GeneratorEval fd_generator(const Grid& g, const Eigen::MatrixXd& V, int k, int s, const double* b, const double* a) {
  const int d = g.dim();
  GeneratorEval ev;
  ev.u_t = (V(k + 1, s) - V(k, s)) / (g.t(k + 1) - g.t(k));
  int rest = s;
  int idx[16];
  for (int i = 0; i < d; ++i) {
    idx[i] = rest % g.nx(i);
    rest /= g.nx(i);
  }
  for (int i = 0; i < d; ++i) {
    const int si = g.stride(i);
    const double hm = g.space(i)(idx[i]) - g.space(i)(idx[i] - 1);
    const double hp = g.space(i)(idx[i] + 1) - g.space(i)(idx[i]);
    const double um = V(k, s - si), u0 = V(k, s), up = V(k, s + si);
    // three-point formulas, second order on uniform spacing
    const double ux = (hm * hm * (up - u0) + hp * hp * (u0 - um)) / (hm * hp * (hm + hp));
    const double uxx = 2.0 * (hm * (up - u0) - hp * (u0 - um)) / (hm * hp * (hm + hp));
    ev.drift += b[i] * ux;
    ev.diffusion += 0.5 * a[i * d + i] * uxx;
    for (int j = i + 1; j < d; ++j) {
      if (a[i * d + j] == 0.0) continue;
      const int sj = g.stride(j);
      const double wi = g.space(i)(idx[i] + 1) - g.space(i)(idx[i] - 1);
      const double wj = g.space(j)(idx[j] + 1) - g.space(j)(idx[j] - 1);
      const double uij = (V(k, s + si + sj) - V(k, s + si - sj) - V(k, s - si + sj) + V(k, s - si - sj)) / (wi * wj);
      ev.diffusion += a[i * d + j] * uij;  // (i,j) and (j,i) together
    }
  }
  ev.residual = -ev.u_t - ev.drift - ev.diffusion;
  return ev;
}

}  // namespace

GeneratorEval apply_generator(const Problem& p, const GridFn& u, int k, int s) {
  const Grid& g = *u.grid;
  if (!residual_node(g, k, s)) throw std::invalid_argument("finite-difference generator needs an interior node");
  if (g.dim() > 16) throw std::invalid_argument("at most 16 dimensions supported");
  const int d = g.dim();
  Eigen::VectorXd x = g.point(s);
  Eigen::VectorXd b(d);
  p.drift(g.t(k), x.data(), b.data());
  Eigen::MatrixXd a = p.covariance(g.t(k), x);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a;
  return fd_generator(g, u.values, k, s, b.data(), ar.data());
}

CoefficientTable tabulate(const Problem& p, std::shared_ptr<const Grid> grid) {
  const Grid& g = *grid;
  if (g.dim() != p.d()) throw std::invalid_argument("grid dimension does not match problem");
  const int d = g.dim();
  const long n = g.size();
  CoefficientTable c{grid, Eigen::MatrixXd(n, d), Eigen::MatrixXd(n, d * d)};
  Eigen::VectorXd x(d);
  Eigen::VectorXd b(d);
  for (int k = 0; k < g.nt(); ++k)
    for (int s = 0; s < g.space_size(); ++s) {
      const long row = static_cast<long>(k) * g.space_size() + s;
      g.point(s, x.data());
      p.drift(g.t(k), x.data(), b.data());
      c.b.row(row) = b.transpose();
      Eigen::MatrixXd a = p.covariance(g.t(k), x);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) c.a(row, i * d + j) = a(i, j);
    }
  return c;
}

double discrete_residual_at(const CoefficientTable& c, const Eigen::MatrixXd& values, int k, int s) {
  const Grid& g = *c.grid;
  const long row = static_cast<long>(k) * g.space_size() + s;
  const int d = g.dim();
  double b[16];
  double a[256];
  for (int i = 0; i < d; ++i) b[i] = c.b(row, i);
  for (int i = 0; i < d * d; ++i) a[i] = c.a(row, i);
  return fd_generator(g, values, k, s, b, a).residual;
}

Eigen::MatrixXd discrete_residual(const CoefficientTable& c, const GridFn& u) {
  const Grid& g = *u.grid;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(g.nt(), g.space_size());
  for (int k = 0; k + 1 < g.nt(); ++k)
    for (int s = 0; s < g.space_size(); ++s)
      if (!g.on_space_boundary(s)) r(k, s) = discrete_residual_at(c, u.values, k, s);
  return r;
}

Eigen::MatrixXd discrete_residual(const Problem& p, const GridFn& u) { return discrete_residual(tabulate(p, u.grid), u); }

namespace {

using Triplet = Eigen::Triplet<double>;

// Rows of the spatial operator L_h at time t for all interior nodes.
Eigen::SparseMatrix<double> assemble(const Problem& p, const Grid& g, double t, int& upwind) {
  const int d = g.dim();
  const int ns = g.space_size();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(ns) * (2 * d + 1));
  Eigen::VectorXd x(d);
  for (int s = 0; s < ns; ++s) {
    if (g.on_space_boundary(s)) continue;
    g.point(s, x.data());
    Eigen::MatrixXd a = p.covariance(t, x);
    double diag = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j)
        if (i != j && std::fabs(a(i, j)) > 1e-12 * (1.0 + std::fabs(a(i, i)) + std::fabs(a(j, j))))
          throw SolverError("solver supports diagonal diffusion only; sigma sigma^T has off-diagonal entries");
      if (a(i, i) < -1e-14) throw SolverError("diffusion is not positive semidefinite on the grid");
      const double D = 0.5 * std::max(0.0, a(i, i));
      const double b = p.data().b[i](t, x.data());
      const double h = g.dx(i);
      double lower = D / (h * h);
      double upper = D / (h * h);
      double centre = -2.0 * D / (h * h);
      const bool use_upwind = std::fabs(b) * h > 2.0 * D;
      if (use_upwind) {
        ++upwind;
        if (b > 0) {
          upper += b / h;
          centre -= b / h;
        } else {
          lower -= b / h;
          centre += b / h;
        }
      } else {
        lower -= b / (2.0 * h);
        upper += b / (2.0 * h);
      }
      const int si = g.stride(i);
      trip.emplace_back(s, s - si, lower);
      trip.emplace_back(s, s + si, upper);
      diag += centre;
    }
    trip.emplace_back(s, s, diag);
  }
  Eigen::SparseMatrix<double> L(ns, ns);
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

}  // namespace

SolveResult solve_terminal_value(const Problem& p, std::shared_ptr<const Grid> grid, const SolveOptions& opt) {
  const Grid& g = *grid;
  if (!(opt.theta >= 0.0 && opt.theta <= 1.0)) throw std::invalid_argument("theta must lie in [0, 1]");
  if (g.dim() != p.d()) throw std::invalid_argument("grid dimension does not match problem");
  if (!g.uniform_space()) throw std::invalid_argument("solver needs uniform spacing in every space dimension");
  if (std::fabs(g.t(g.nt() - 1) - p.T()) > 0.0) throw std::invalid_argument("grid must end at the horizon T");

  const int nt = g.nt();
  const int ns = g.space_size();
  const double theta = opt.theta;
  SolveResult res;

  Eigen::VectorXd gv(ns);
  Eigen::VectorXd x(g.dim());
  std::vector<char> boundary(ns);
  for (int s = 0; s < ns; ++s) {
    g.point(s, x.data());
    gv(s) = p.g()(p.T(), x);
    boundary[s] = g.on_space_boundary(s);
  }

  Eigen::MatrixXd U(nt, ns);
  U.row(nt - 1) = gv.transpose();

  Eigen::SparseMatrix<double> I(ns, ns);
  I.setIdentity();
  Eigen::SparseMatrix<double> Lnext = assemble(p, g, g.t(nt - 1), res.upwind_nodes);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analysed = false;
  double worst_cfl = 0.0;

  for (int k = nt - 2; k >= 0; --k) {
    const double dt = g.t(k + 1) - g.t(k);
    Eigen::SparseMatrix<double> Lk = assemble(p, g, g.t(k), res.upwind_nodes);
    Eigen::VectorXd rhs = U.row(k + 1).transpose();
    if (theta < 1.0) rhs += (1.0 - theta) * dt * (Lnext * rhs);
    Eigen::SparseMatrix<double> A = I - (theta * dt) * Lk;
    for (int s = 0; s < ns; ++s)
      if (boundary[s]) rhs(s) = gv(s);
    A.makeCompressed();
    if (!analysed) {
      lu.analyzePattern(A);
      analysed = true;
    }
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw SolverError("linear solve failed at time step " + std::to_string(k));
    Eigen::VectorXd next = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !next.allFinite())
      throw SolverError("linear solve failed at time step " + std::to_string(k));
    U.row(k) = next.transpose();

    if (theta < 0.5) {
      for (int s = 0; s < ns; ++s) worst_cfl = std::max(worst_cfl, -(1.0 - theta) * dt * Lnext.coeff(s, s));
    }
    Lnext = std::move(Lk);
  }
  if (theta < 0.5 && worst_cfl > 1.0) {
    std::ostringstream os;
    os << "theta=" << theta << " with explicit weight: max (1-theta) dt |L_ii| = " << worst_cfl
       << " exceeds 1; reduce dt or use theta >= 0.5";
    res.warnings.push_back(os.str());
  }

  res.u = GridFn(grid, std::move(U), Regularity::Continuous);
  Eigen::MatrixXd r = discrete_residual(p, res.u);
  res.max_abs_residual = r.cwiseAbs().maxCoeff();
  double dtmax = 0.0;
  for (int k = 0; k + 1 < nt; ++k) dtmax = std::max(dtmax, g.t(k + 1) - g.t(k));
  double dx2 = 0.0;
  for (int j = 0; j < g.dim(); ++j) dx2 = std::max(dx2, g.dx(j) * g.dx(j));
  res.residual_constant = res.max_abs_residual / (dtmax + dx2);
  return res;
}

}  // namespace perronlab
