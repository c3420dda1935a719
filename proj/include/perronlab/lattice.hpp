#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace perronlab {

class Problem;

/// Tensor-product grid over [0,T] x box. Space nodes are flattened with the
/// first coordinate varying fastest.
class Grid {
 public:
  Grid(Eigen::VectorXd time_nodes, std::vector<Eigen::VectorXd> space_nodes);

  static Grid uniform(double T, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int nt, int nx);
  static Grid uniform(const Problem& p, int nt, int nx);

  int dim() const { return static_cast<int>(space_.size()); }
  int nt() const { return static_cast<int>(time_.size()); }
  int nx(int j) const { return static_cast<int>(space_[j].size()); }
  int space_size() const { return space_size_; }
  long size() const { return static_cast<long>(nt()) * space_size_; }

  const Eigen::VectorXd& time() const { return time_; }
  const Eigen::VectorXd& space(int j) const { return space_[j]; }
  double t(int k) const { return time_(k); }

  /// Flat space index -> per-dimension indices.
  std::vector<int> unflatten(int s) const;
  int flatten(const std::vector<int>& idx) const;
  int stride(int j) const { return stride_[j]; }
  Eigen::VectorXd point(int s) const;
  void point(int s, double* out) const;
  bool on_space_boundary(int s) const;
  bool uniform_space() const;
  double dx(int j) const;  // first spacing in dimension j

  bool operator==(const Grid& o) const;

 private:
  Eigen::VectorXd time_;
  std::vector<Eigen::VectorXd> space_;
  std::vector<int> stride_;
  int space_size_ = 0;
};

enum class Regularity { USC, LSC, Continuous, Unknown };
const char* to_string(Regularity r);

/// Values on a grid: rows are time nodes, columns flattened space nodes.
struct GridFn {
  std::shared_ptr<const Grid> grid;
  Eigen::MatrixXd values;
  Regularity tag = Regularity::Unknown;

  GridFn() = default;
  GridFn(std::shared_ptr<const Grid> g, Eigen::MatrixXd v, Regularity r);

  static GridFn constant(std::shared_ptr<const Grid> g, double c, Regularity r = Regularity::Continuous);

  double operator()(int k, int s) const { return values(k, s); }
  double& operator()(int k, int s) { return values(k, s); }

  /// Multilinear interpolation; points outside the box are clamped and
  /// reported through `clamped`.
  double interpolate(double t, const double* x, bool* clamped = nullptr) const;
};

GridFn operator-(const GridFn& f);

struct FnFamily {
  std::vector<GridFn> members;
  std::string label;

  const Grid& grid() const;
};

struct NodeSet {
  std::vector<long> nodes;  // flat index k * space_size + s, ascending
  bool operator==(const NodeSet& o) const { return nodes == o.nodes; }
};

GridFn pointwise_inf(const FnFamily& fam);
GridFn pointwise_sup(const FnFamily& fam);
NodeSet sublevel_set(const GridFn& f, double q);

struct Selection {
  std::vector<int> indices;  // ascending
  std::vector<double> rationals;  // the levels finally used
  int enlargements = 0;           // rounds of midpoint enlargement
};

/// Finite cover selection: for every q, members whose sublevel sets are needed
/// to cover the family's sublevel set (first-fit in member order). Enlarges the
/// levels until the infimum over the selection equals the family infimum.
Selection countable_selection(const FnFamily& fam, std::vector<double> rationals);
/// Levels = midpoints between consecutive distinct values of the family.
Selection countable_selection(const FnFamily& fam);
std::vector<double> default_rationals(const FnFamily& fam);

}  // namespace perronlab
