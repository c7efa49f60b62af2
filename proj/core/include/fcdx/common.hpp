#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fcdx {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: io_error -> 3, data_error/config_error -> 4. dimension_error and
// contract_error indicate caller bugs and also map to 4 when they escape.
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fcdx
