// Copyright 2026 The flowscm Authors
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

#include "flowscm/attribution.hpp"
#include "flowscm/claims.hpp"
#include "flowscm/error.hpp"
#include "flowscm/experiment.hpp"
#include "flowscm/graph.hpp"
#include "flowscm/graph_io.hpp"
#include "flowscm/log.hpp"
#include "flowscm/mechanism.hpp"
#include "flowscm/report.hpp"
#include "flowscm/rng.hpp"
#include "flowscm/runtime.hpp"
#include "flowscm/scm.hpp"
#include "flowscm/scm_io.hpp"
#include "flowscm/stats.hpp"
#include "flowscm/value.hpp"
