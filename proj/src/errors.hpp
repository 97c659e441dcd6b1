#pragma once

#include <stdexcept>

namespace bpg {

/// A file or directory could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint written by an incompatible format version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bpg
