// Copyright 2026 The mrtwin Authors
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

namespace mrtwin {

/// Base of every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MRTWIN_DEFINE_ERROR(Name, Base)  \
  class Name : public Base {             \
   public:                               \
    using Base::Base;                    \
  }

// odd-model
MRTWIN_DEFINE_ERROR(UnsupportedConstraint, Error);
MRTWIN_DEFINE_ERROR(InvalidOddSpec, Error);

// images and transforms
MRTWIN_DEFINE_ERROR(InvalidImage, Error);
MRTWIN_DEFINE_ERROR(DimensionMismatch, Error);
MRTWIN_DEFINE_ERROR(BadSpec, Error);
MRTWIN_DEFINE_ERROR(SourceOutOfDomain, Error);
MRTWIN_DEFINE_ERROR(ExhaustedRetries, Error);
MRTWIN_DEFINE_ERROR(GeneratorUnavailable, Error);

// wire protocol (generator and SUT sessions)
MRTWIN_DEFINE_ERROR(ProtocolError, Error);
MRTWIN_DEFINE_ERROR(LaunchFailure, ProtocolError);
MRTWIN_DEFINE_ERROR(HandshakeTimeout, ProtocolError);
MRTWIN_DEFINE_ERROR(ProtocolVersionMismatch, ProtocolError);
MRTWIN_DEFINE_ERROR(UnsupportedTransform, ProtocolError);
MRTWIN_DEFINE_ERROR(ResponseTimeout, ProtocolError);
MRTWIN_DEFINE_ERROR(GeneratorTimeout, ResponseTimeout);
MRTWIN_DEFINE_ERROR(SutTimeout, ResponseTimeout);
MRTWIN_DEFINE_ERROR(MalformedResponse, ProtocolError);
MRTWIN_DEFINE_ERROR(GeneratorReportedError, ProtocolError);
MRTWIN_DEFINE_ERROR(PeerExited, ProtocolError);
MRTWIN_DEFINE_ERROR(SutCrashed, PeerExited);
MRTWIN_DEFINE_ERROR(SessionClosed, ProtocolError);

// mr-registry
MRTWIN_DEFINE_ERROR(DuplicateId, Error);
MRTWIN_DEFINE_ERROR(InvalidThresholds, Error);
MRTWIN_DEFINE_ERROR(UnknownMr, Error);

// temporal-analysis
MRTWIN_DEFINE_ERROR(EmptyWindow, Error);
MRTWIN_DEFINE_ERROR(SizeMismatch, Error);

// pipeline, scenario, cli
MRTWIN_DEFINE_ERROR(ConfigInvalid, Error);
MRTWIN_DEFINE_ERROR(NoFrames, Error);
MRTWIN_DEFINE_ERROR(IoFailure, Error);
MRTWIN_DEFINE_ERROR(OutOfRange, Error);
MRTWIN_DEFINE_ERROR(SchemaMismatch, Error);

#undef MRTWIN_DEFINE_ERROR

}  // namespace mrtwin
