#pragma once

#include <Eigen/Dense>

namespace coxhoa {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace coxhoa
