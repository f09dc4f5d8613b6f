#pragma once

#include <stdexcept>
#include <string>

namespace acmg {

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A masked sequence has no valid positions.
class EmptySequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidLengthError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid synthetic-corpus specification; the message names the field.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid model/train/run configuration; the message names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward or backward pass produced NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An analysis was asked of data that cannot support it (e.g. no flagged frames).
class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base for everything that can go wrong reading a corpus or checkpoint.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class BoundsError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace acmg
