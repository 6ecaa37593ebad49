/* Copyright 2026 The qalabel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qalabel {

// Base of every error raised by the library. Each subclass maps onto one
// failure category so callers (the CLI, the HTTP layer) can translate it into
// an exit code or a status without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An answer or label that cannot arise from the three labeling steps.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

// Exhaustive enumeration requested beyond the supported class count.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class InconsistentPmf : public Error {
 public:
  using Error::Error;
};

class MissingGroundTruth : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Store line that parses but violates the labeling rules.
class StoredProtocolViolation : public ProtocolViolation {
 public:
  StoredProtocolViolation(const std::string& what, std::size_t line)
      : ProtocolViolation("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qalabel
