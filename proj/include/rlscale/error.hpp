#pragma once

#include <stdexcept>
#include <string>

namespace rlscale {

// Configuration / input validation failure. The CLI maps this to exit
// status 2; every other exception maps to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ValidationError(message);
}

}  // namespace rlscale
