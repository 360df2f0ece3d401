#ifndef CSIALIGN_TYPES_HPP
#define CSIALIGN_TYPES_HPP

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace csialign {

/// Dense complex matrix over a real scalar type (column-major, dynamic size).
template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using CVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using RVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
inline constexpr Scalar kPi = std::numbers::pi_v<Scalar>;

/// e^{j x}
template <typename Scalar>
inline std::complex<Scalar> cis(Scalar x) {
  return {std::cos(x), std::sin(x)};
}

}  // namespace csialign

#endif  // CSIALIGN_TYPES_HPP
