#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace smore {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid geometric input (non-orthonormal rotation, ambiguous log, empty mesh...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A trajectory was queried outside the time span its keyframes cover.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, double time, double first, double last)
      : Error(what), time_(time), first_(first), last_(last) {}

  double time() const { return time_; }
  double first() const { return first_; }
  double last() const { return last_; }

 private:
  double time_;
  double first_;
  double last_;
};

/// Malformed or inconsistent on-disk data. Carries the file and byte offset.
class DataError : public Error {
 public:
  DataError(const std::string& file, std::uint64_t offset, const std::string& expectation)
      : Error(file + " @ byte " + std::to_string(offset) + ": " + expectation),
        file_(file),
        offset_(offset) {}

  const std::string& file() const { return file_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

class UnsupportedVersion : public DataError {
 public:
  UnsupportedVersion(const std::string& file, std::uint32_t version)
      : DataError(file, 4, "unsupported version " + std::to_string(version)), version_(version) {}

  std::uint32_t version() const { return version_; }

 private:
  std::uint32_t version_;
};

}  // namespace smore
