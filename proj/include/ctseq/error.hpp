#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctseq {

enum class ErrorCode {
  Io,
  Format,
  Dimension,
  Geometry,
  Contract,
  Shape,
  Parse,
  Join,
  MissingArtifact,
  Usage,
  Config,
};

// Stable identifier printed as the machine-parsable prefix by the CLI.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ctseq
