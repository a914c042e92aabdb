#pragma once

#include <stdexcept>
#include <string>

namespace snag {

// Bad user input: malformed files, invalid configs, missing paths. The CLI
// maps it to exit code 2; every other exception maps to 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snag
