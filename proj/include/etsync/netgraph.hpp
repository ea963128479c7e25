#pragma once

#include "etsync/errors.hpp"
#include "etsync/types.hpp"

namespace etsync::netgraph {

inline constexpr Real kConnectTol = 1e-9L;

struct LaplacianSpectrum {
    std::vector<Real> mu;  // sorted ascending, mu[0] ~ 0
};

// Weighted undirected communication topology. Immutable after construction;
// construction validates symmetry, nonnegative weights, zero diagonal and
// connectivity (BFS cross-checked against mu_2 > 0).
class CommGraph {
  public:
    explicit CommGraph(Mat adjacency);

    [[nodiscard]] Index node_count() const { return adj_.rows(); }
    [[nodiscard]] const Mat& adjacency() const { return adj_; }
    [[nodiscard]] Real weight(Index i, Index j) const { return adj_(i, j); }

  private:
    Mat adj_;
};

[[nodiscard]] Mat laplacian(const CommGraph& g);
[[nodiscard]] LaplacianSpectrum spectrum(const CommGraph& g);

// Synchronizability bound (1 + mu2/mum) / (1 - mu2/mum);
// +infinity sentinel when mu2 == mum (complete-graph-like spectra).
[[nodiscard]] Real feasibility_threshold(const LaplacianSpectrum& spec);

// Unit-weight convenience generators.
[[nodiscard]] CommGraph ring(Index m);
[[nodiscard]] CommGraph complete(Index m);
[[nodiscard]] CommGraph path(Index m);
[[nodiscard]] CommGraph star(Index m);

}  // namespace etsync::netgraph
