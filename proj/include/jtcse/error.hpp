#pragma once

#include <stdexcept>
#include <string>

namespace jtcse {

enum class ErrorClass { Config = 2, Data = 3, Numeric = 4, Io = 5 };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& msg)
      : std::runtime_error(msg), cls_(cls) {}
  ErrorClass cls() const { return cls_; }
  int exit_code() const { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorClass::Config, m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorClass::Data, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorClass::Numeric, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorClass::Io, m) {}
};

}  // namespace jtcse
