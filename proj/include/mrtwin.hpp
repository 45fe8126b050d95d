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

#include "mrtwin/config.hpp"
#include "mrtwin/crash_eval.hpp"
#include "mrtwin/errors.hpp"
#include "mrtwin/image.hpp"
#include "mrtwin/json_io.hpp"
#include "mrtwin/mr.hpp"
#include "mrtwin/odd.hpp"
#include "mrtwin/pipeline.hpp"
#include "mrtwin/process.hpp"
#include "mrtwin/protocol.hpp"
#include "mrtwin/rng.hpp"
#include "mrtwin/scenario.hpp"
#include "mrtwin/sut.hpp"
#include "mrtwin/temporal.hpp"
#include "mrtwin/transform.hpp"
#include "mrtwin/version.hpp"
