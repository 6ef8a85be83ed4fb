#include "lopmap/error.hpp"

namespace lopmap {

const char* error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UndefinedEmbedding: return "UndefinedEmbedding";
    case ErrorCode::NoSamples: return "NoSamples";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::NoPathFound: return "NoPathFound";
    case ErrorCode::UnknownVertex: return "UnknownVertex";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace lopmap
