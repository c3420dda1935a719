#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "perronlab/lattice.hpp"
#include "perronlab/sde.hpp"

namespace perronlab {

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
  long M = 0;
  std::pair<double, double> ci95{0.0, 0.0};
};

/// Mean, standard error and 95% interval of a sample. A constant sample
/// gives exactly that constant with zero error.
Estimate summarize(const Eigen::VectorXd& sample);

Estimate estimate_value(const Problem& p, double s, const Eigen::VectorXd& x0, long M, int N,
                        std::uint64_t seed, const SimulationOptions& opt = {});

struct GridEstimate {
  GridFn value;
  GridFn stderr_;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;  // nt x space_size
  std::vector<std::pair<int, int>> invalid_nodes;             // (k, s)
  std::vector<std::string> invalid_reasons;
};

/// Node seeds are derive_seed(seed, k * space_size + s). Nodes at t = T are
/// exact. N steps are used from every start time.
GridEstimate estimate_grid(const Problem& p, std::shared_ptr<const Grid> grid, long M, int N, std::uint64_t seed,
                           const SimulationOptions& opt = {});

}  // namespace perronlab
