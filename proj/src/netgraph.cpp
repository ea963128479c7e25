#include "etsync/netgraph.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <limits>
#include <sstream>
#include <vector>

namespace etsync::netgraph {

namespace {

bool bfs_connected(const Mat& adj) {
    const Index m = adj.rows();
    if (m == 0) return false;
    std::vector<bool> seen(static_cast<size_t>(m), false);
    std::vector<Index> stack{0};
    seen[0] = true;
    Index visited = 1;
    while (!stack.empty()) {
        const Index u = stack.back();
        stack.pop_back();
        for (Index v = 0; v < m; ++v) {
            if (!seen[static_cast<size_t>(v)] && adj(u, v) > 0.0L) {
                seen[static_cast<size_t>(v)] = true;
                ++visited;
                stack.push_back(v);
            }
        }
    }
    return visited == m;
}

Mat laplacian_of(const Mat& adj) {
    Mat L = -adj;
    for (Index i = 0; i < adj.rows(); ++i) L(i, i) = adj.row(i).sum();
    return L;
}

LaplacianSpectrum spectrum_of(const Mat& adj) {
    Eigen::SelfAdjointEigenSolver<Mat> es(laplacian_of(adj));
    if (es.info() != Eigen::Success) {
        throw ConvergenceFailure("netgraph: Laplacian eigensolver failed");
    }
    LaplacianSpectrum s;
    s.mu.assign(es.eigenvalues().data(), es.eigenvalues().data() + adj.rows());
    std::sort(s.mu.begin(), s.mu.end());
    return s;
}

}  // namespace

CommGraph::CommGraph(Mat adjacency) : adj_(std::move(adjacency)) {
    const Index m = adj_.rows();
    if (m < 2 || adj_.cols() != m) {
        throw InvalidGraph("CommGraph: adjacency must be square with >= 2 nodes");
    }
    for (Index i = 0; i < m; ++i) {
        if (adj_(i, i) != 0.0L) throw InvalidGraph("CommGraph: nonzero diagonal entry");
        for (Index j = 0; j < m; ++j) {
            if (adj_(i, j) < 0.0L) throw InvalidGraph("CommGraph: negative weight");
            if (adj_(i, j) != adj_(j, i)) throw InvalidGraph("CommGraph: adjacency not symmetric");
        }
    }
    const bool traversal_ok = bfs_connected(adj_);
    const bool spectral_ok = spectrum_of(adj_).mu[1] > kConnectTol;
    if (!traversal_ok || !spectral_ok) {
        throw Disconnected("CommGraph: graph is not connected");
    }
}

Mat laplacian(const CommGraph& g) { return laplacian_of(g.adjacency()); }

LaplacianSpectrum spectrum(const CommGraph& g) {
    LaplacianSpectrum s = spectrum_of(g.adjacency());
    if (s.mu[1] <= kConnectTol) {
        throw Disconnected("spectrum: mu_2 below connectivity tolerance");
    }
    return s;
}

Real feasibility_threshold(const LaplacianSpectrum& spec) {
    if (spec.mu.size() < 2 || spec.mu[1] <= kConnectTol) {
        throw Disconnected("feasibility_threshold: spectrum not from a connected graph");
    }
    const Real mu2 = spec.mu[1];
    const Real mum = spec.mu.back();
    if (mu2 > mum) {
        throw InvalidGraph("feasibility_threshold: spectrum not sorted");
    }
    const Real ratio = mu2 / mum;
    if (ratio >= 1.0L - 1e-12L) return std::numeric_limits<Real>::infinity();
    return (1.0L + ratio) / (1.0L - ratio);
}

CommGraph ring(Index m) {
    if (m < 3) throw InvalidGraph("ring: need m >= 3");
    Mat a = Mat::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
        const Index j = (i + 1) % m;
        a(i, j) = a(j, i) = 1.0L;
    }
    return CommGraph(std::move(a));
}

CommGraph complete(Index m) {
    if (m < 2) throw InvalidGraph("complete: need m >= 2");
    Mat a = Mat::Ones(m, m);
    a.diagonal().setZero();
    return CommGraph(std::move(a));
}

CommGraph path(Index m) {
    if (m < 2) throw InvalidGraph("path: need m >= 2");
    Mat a = Mat::Zero(m, m);
    for (Index i = 0; i + 1 < m; ++i) a(i, i + 1) = a(i + 1, i) = 1.0L;
    return CommGraph(std::move(a));
}

CommGraph star(Index m) {
    if (m < 2) throw InvalidGraph("star: need m >= 2");
    Mat a = Mat::Zero(m, m);
    for (Index i = 1; i < m; ++i) a(0, i) = a(i, 0) = 1.0L;
    return CommGraph(std::move(a));
}

}  // namespace etsync::netgraph
