// Common dense types. Everything numeric in this project is 64-bit float.
#pragma once

#include <Eigen/Dense>

namespace ractd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace ractd
