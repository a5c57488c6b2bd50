// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stsc {

enum class Errc {
  FileNotFound,
  UnsupportedEncoding,
  CorruptHeader,
  EmptySignal,
  MissingColumn,
  Phq8OutOfRange,
  DuplicatePath,
  TooFewSpeakers,
  NoFragments,
  ShapeMismatch,
  EmptySequence,
  BatchSizeMismatch,
  NonFiniteValue,
  NonFiniteGradient,
  VersionMismatch,
  ChecksumFailure,
  CorruptFile,
  DegenerateLabels,
  InsufficientFragments,
  DegenerateData,
  ConfigInvalid,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
  case Errc::FileNotFound: return "FileNotFound";
  case Errc::UnsupportedEncoding: return "UnsupportedEncoding";
  case Errc::CorruptHeader: return "CorruptHeader";
  case Errc::EmptySignal: return "EmptySignal";
  case Errc::MissingColumn: return "MissingColumn";
  case Errc::Phq8OutOfRange: return "Phq8OutOfRange";
  case Errc::DuplicatePath: return "DuplicatePath";
  case Errc::TooFewSpeakers: return "TooFewSpeakers";
  case Errc::NoFragments: return "NoFragments";
  case Errc::ShapeMismatch: return "ShapeMismatch";
  case Errc::EmptySequence: return "EmptySequence";
  case Errc::BatchSizeMismatch: return "BatchSizeMismatch";
  case Errc::NonFiniteValue: return "NonFiniteValue";
  case Errc::NonFiniteGradient: return "NonFiniteGradient";
  case Errc::VersionMismatch: return "VersionMismatch";
  case Errc::ChecksumFailure: return "ChecksumFailure";
  case Errc::CorruptFile: return "CorruptFile";
  case Errc::DegenerateLabels: return "DegenerateLabels";
  case Errc::InsufficientFragments: return "InsufficientFragments";
  case Errc::DegenerateData: return "DegenerateData";
  case Errc::ConfigInvalid: return "ConfigInvalid";
  case Errc::InvalidArgument: return "InvalidArgument";
  case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the Errc codes above.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string &what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string &what) {
  if (!cond)
    fail(code, what);
}

} // namespace stsc
