// Copyright 2026 The LayerTag Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace layertag {

// Base of every error the library raises. The CLI maps UsageError subclasses
// to exit code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-side problems: bad arguments, bad files, bad configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public UsageError {
 public:
  using UsageError::UsageError;
};

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

class NotFound : public UsageError {
 public:
  using UsageError::UsageError;
};

// Missing or corrupt model weights.
class LoadError : public UsageError {
 public:
  using UsageError::UsageError;
};

// On-disk record or checkpoint with an unexpected layout or version.
class FormatError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Optimisation failed (non-finite loss, missing training data).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace layertag
