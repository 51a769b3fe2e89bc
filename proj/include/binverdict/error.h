// Copyright 2026 The binverdict Authors.
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

#ifndef BINVERDICT_ERROR_H_
#define BINVERDICT_ERROR_H_

#include <stdexcept>
#include <string>

namespace binverdict {

// Broad failure classes. Each maps to a stable process exit code in the CLI.
enum class ErrorKind {
  kConfig,     // bad configuration or arguments
  kData,       // malformed or inconsistent input data
  kContract,   // caller violated an API precondition (dims, lengths)
  kIntegrity,  // persisted file is corrupt or truncated
  kVersion,    // persisted file has an unsupported format version
  kNoEvidence, // nothing to decide on
  kTransport,  // remote backend unreachable or misbehaving
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& message, int attempts)
      : Error(ErrorKind::kTransport, message), attempts_(attempts) {}

  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

}  // namespace binverdict

#endif  // BINVERDICT_ERROR_H_
