#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace etsync {

// All numerics run on extended precision. The monitored plant has unstable
// modes (|lambda| > 1), so states grow geometrically with the horizon; the
// exact-fusion identities cancel quantities of that magnitude and need the
// extra mantissa bits to stay at the advertised tolerances over long runs.
using Real = long double;
using Complex = std::complex<Real>;

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using CVec = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
using CRowVec = Eigen::Matrix<Complex, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

struct Spectrum {
    std::vector<Complex> eigenvalues;  // sorted by (real, imag)
    CMat eigenvectors;                 // columns aligned with eigenvalues
};

}  // namespace etsync
