// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception hierarchy shared by every nnam module.
 */
#ifndef NNAM_ERROR_HPP
#define NNAM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nnam {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Index outside its valid range (class index, epoch index, ...).
class IndexError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or hyperparameter.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Invalid or degenerate data.
class DataError : public Error {
public:
  using Error::Error;
};

/// Malformed input text.
class ParseError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite criterion.
class TrainingError : public Error {
public:
  using Error::Error;
};

/// No legal decoding path exists.
class DecodeError : public Error {
public:
  using Error::Error;
};

/// A test oracle could not produce a reference value.
class OracleError : public Error {
public:
  using Error::Error;
};

/// Phone symbol missing from a phone map.
class MappingError : public Error {
public:
  using Error::Error;
};

/// Scoring with an invalid reference.
class ScoringError : public Error {
public:
  using Error::Error;
};

} // namespace nnam

#endif // NNAM_ERROR_HPP
