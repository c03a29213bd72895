// Copyright 2026 The trialmatch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "trialmatch/error.hpp"

namespace trialmatch {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateValue: return "DuplicateValue";
    case ErrorCode::kIncompleteOrdering: return "IncompleteOrdering";
    case ErrorCode::kOutOfRangeValue: return "OutOfRangeValue";
    case ErrorCode::kEmptySide: return "EmptySide";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kNotMatched: return "NotMatched";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kInvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kInvalidTransition: return "InvalidTransition";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kReducible: return "Reducible";
    case ErrorCode::kZeroProbability: return "ZeroProbability";
    case ErrorCode::kGridTooSmall: return "GridTooSmall";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
      code_(code) {}

}  // namespace trialmatch
