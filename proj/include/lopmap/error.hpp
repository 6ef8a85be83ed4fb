#pragma once

#include <stdexcept>
#include <string>

namespace lopmap {

enum class ErrorCode {
  InvalidDepth,
  OutOfBounds,
  GenerationFailed,
  InvalidLabel,
  NoData,
  DimMismatch,
  InvalidInput,
  BatchTooSmall,
  CorruptCheckpoint,
  UndefinedEmbedding,
  NoSamples,
  InvalidBounds,
  SchemaError,
  NoCandidates,
  NoPathFound,
  UnknownVertex,
  InvalidConfig,
  IoError,
};

const char* error_name(ErrorCode code) noexcept;

/// Every module reports failures through this one exception type; the code
/// is what the CLI prints as the structured error name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  const char* name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace lopmap
