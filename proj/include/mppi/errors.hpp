#pragma once

#include <stdexcept>
#include <string>

namespace mppi {

// Invalid problem setup: non-SPD covariance, malformed config file, etc.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Well-formed call, invalid values inside the data (NaN costs, ...).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mppi
