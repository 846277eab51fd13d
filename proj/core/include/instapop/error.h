/*
 * Copyright 2026 The instapop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef INSTAPOP_ERROR_H_
#define INSTAPOP_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace instapop {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller passed a value outside the documented domain of an operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violation, e.g. log of a negative count.
class DomainError : public Error {
 public:
  using Error::Error;
};

// An object was used before it was initialised (e.g. unfitted transforms).
class StateError : public Error {
 public:
  using Error::Error;
};

// Text could not be parsed. `position` is the 0-based offending character.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position, char offending)
      : Error(message), position_(position), offending_(offending) {}

  std::size_t position() const { return position_; }
  char offending() const { return offending_; }

 private:
  std::size_t position_;
  char offending_;
};

// Dataset file or record validation failure. `row` is 1-based; 0 means the
// header or sidecar.
class IngestError : public Error {
 public:
  IngestError(const std::string& message, std::uint64_t row)
      : Error(row == 0 ? message
                       : "row " + std::to_string(row) + ": " + message),
        row_(row) {}

  std::uint64_t row() const { return row_; }

 private:
  std::uint64_t row_;
};

// Two schemas (model vs data, file vs expected) disagree.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Correlation of a constant vector is undefined.
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

// Model file has the wrong magic, version or structure.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace instapop

#endif  // INSTAPOP_ERROR_H_
