#pragma once

#include <stdexcept>
#include <string>

namespace pcp {

// Values double as CLI exit codes and C API status codes.
enum class ErrorKind { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void usage_error(const std::string& what) { throw Error(ErrorKind::Usage, what); }
[[noreturn]] inline void data_error(const std::string& what) { throw Error(ErrorKind::Data, what); }
[[noreturn]] inline void numeric_error(const std::string& what) { throw Error(ErrorKind::Numeric, what); }

}  // namespace pcp
