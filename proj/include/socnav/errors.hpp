#pragma once

#include <stdexcept>
#include <string>

namespace socnav {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (episode, config, spec).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// On-disk data does not conform to the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The filesystem refused a read or write.
class StorageError : public Error {
 public:
  using Error::Error;
};

/// A tensor or input has the wrong shape or contents for an operation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Not enough demonstrated path remains after a frame to extract a sample.
class InsufficientFuture : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// World generation could not place its objects.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A required artifact (manifest, checkpoint) does not exist yet.
class MissingPrerequisite : public Error {
 public:
  using Error::Error;
};

}  // namespace socnav
