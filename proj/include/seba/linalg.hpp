#ifndef SEBA_LINALG_HPP
#define SEBA_LINALG_HPP

#include <Eigen/Dense>

namespace seba {

// Batches are stored one sample per row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

} // namespace seba

#endif
