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

#include "binverdict/error.h"

namespace binverdict {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kContract:
      return "contract";
    case ErrorKind::kIntegrity:
      return "integrity";
    case ErrorKind::kVersion:
      return "version";
    case ErrorKind::kNoEvidence:
      return "no-evidence";
    case ErrorKind::kTransport:
      return "transport";
  }
  return "unknown";
}

}  // namespace binverdict
