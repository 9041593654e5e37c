#pragma once

#include <stdexcept>

namespace segeval {

/// File could not be read or written.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File exists but its contents are not understood: unsupported format or
/// datatype, or a header that disagrees with the payload.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace segeval
