#include "ctseq/error.hpp"

namespace ctseq {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::Format: return "E_FORMAT";
    case ErrorCode::Dimension: return "E_DIMENSION";
    case ErrorCode::Geometry: return "E_GEOMETRY";
    case ErrorCode::Contract: return "E_CONTRACT";
    case ErrorCode::Shape: return "E_SHAPE";
    case ErrorCode::Parse: return "E_PARSE";
    case ErrorCode::Join: return "E_JOIN";
    case ErrorCode::MissingArtifact: return "E_MISSING_ARTIFACT";
    case ErrorCode::Usage: return "E_USAGE";
    case ErrorCode::Config: return "E_CONFIG";
  }
  return "E_UNKNOWN";
}

}  // namespace ctseq
