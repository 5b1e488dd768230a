#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <vector>

namespace spbgc {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;
using RowVectord = RowVector<double>;
using ArrayXb = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;
using IndexVector = std::vector<Index>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace spbgc
