/**
 * @file error.hpp
 * @brief Exception types shared by all popgen modules.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace popgen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input bytes (MIDI files, archives).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value cannot be represented in the target encoding.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Matrix/vector dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t batch, const std::string& what)
      : Error(what), batch_index(batch) {}
  std::size_t batch_index;
};

/// The document holds no note events.
class EmptySongError : public Error {
 public:
  using Error::Error;
};

/// No track qualifies as melody.
class CategorizationError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace popgen
