#pragma once

#include <stdexcept>
#include <string>

namespace corepulse {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file could not be opened. The CLI maps this to exit code 2.
class MissingInputError : public Error {
 public:
  explicit MissingInputError(std::string path)
      : Error("missing input file: " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace corepulse
