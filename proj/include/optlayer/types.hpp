#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace optlayer {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct OptlayerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : OptlayerError {
  using OptlayerError::OptlayerError;
};

struct NumericalError : OptlayerError {
  using OptlayerError::OptlayerError;
};

}  // namespace optlayer
