// Copyright 2026 The edgeval Authors
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgeval {

/// Failure categories shared by every module. The string form of each value
/// is what goes out on the wire in ERROR envelopes and REST error bodies.
enum class ErrorCode {
  // wire
  HeaderTooLarge,
  TooManyPayloads,
  BadMagic,
  UnsupportedVersion,
  UnknownMessageType,
  Truncated,
  MalformedHeader,
  TrailingBytes,
  EncodingFailure,
  PreconditionViolation,
  // store
  DuplicateSession,
  StorageUnavailable,
  OutOfOrderFrame,
  NoSuchSession,
  NoSuchFrame,
  CorruptFrame,
  NoSuchResult,
  EmptySession,
  // gateway
  DuplicateModel,
  BadDescriptor,
  UnknownModel,
  ModelTimeout,
  ModelError,
  SchemaMismatch,
  // render
  ParseError,
  EmptyMesh,
  NonpositiveDepth,
  ResolutionMismatch,
  // metrics
  DimensionMismatch,
  NoValidPixels,
  TooFewFrames,
  DegenerateInput,
  // orchestrator
  InvalidManifest,
  InvalidProtocol,
  UnknownProtocol,
  OutOfRange,
  // simulator
  ConnectionRefused,
  ProtocolError,
  LayoutError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace edgeval
