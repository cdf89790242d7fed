#pragma once

#include <Eigen/Dense>

namespace mppinvest {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace mppinvest
