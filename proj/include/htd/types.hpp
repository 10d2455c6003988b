#pragma once

#include <Eigen/Dense>

namespace htd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One sample per row. Row-major so that a batch of n d-dim samples has the
// same memory layout as a column-major d x n matrix.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace htd
