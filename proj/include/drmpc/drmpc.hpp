// Copyright (c) 2026 drmpc Authors
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

#include "drmpc/ckme.hpp"
#include "drmpc/dataset.hpp"
#include "drmpc/drcvar.hpp"
#include "drmpc/dynamics.hpp"
#include "drmpc/experiment.hpp"
#include "drmpc/io.hpp"
#include "drmpc/kernel.hpp"
#include "drmpc/mmd.hpp"
#include "drmpc/nlp.hpp"
#include "drmpc/planner.hpp"
#include "drmpc/predictor.hpp"
#include "drmpc/sim.hpp"
