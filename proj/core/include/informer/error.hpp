// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace informer {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined by an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's mathematical domain (log of a negative, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

// Malformed bitstream, checkpoint, image or config file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace informer
