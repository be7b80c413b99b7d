#pragma once

#include <Eigen/Dense>

namespace slab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace slab
