#pragma once

#include <stdexcept>
#include <string>

namespace viba {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { kInvalidArgument, kIo, kConfig, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) { return Error(ErrorKind::kInvalidArgument, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::kIo, what); }
inline Error config_error(const std::string& what) { return Error(ErrorKind::kConfig, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::kData, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::kNumeric, what); }

}  // namespace viba
