#pragma once

#include <stdexcept>
#include <string>

namespace gaitmm {

enum class ErrorKind {
  kConfig,      // invalid configuration or mismatched weights
  kShape,       // input tensor does not satisfy an operation's shape contract
  kParameter,   // out-of-domain scalar parameter
  kData,        // bad or missing sample data
  kStructural,  // batch composition cannot satisfy the loss/sampler
  kProtocol,    // evaluation protocol cannot be applied to the data
  kNumeric,     // non-finite values
  kIo,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace gaitmm
