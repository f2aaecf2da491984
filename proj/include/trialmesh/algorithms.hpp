// Copyright 2026 The TrialMesh Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "trialmesh/algorithms/dueling.hpp"
#include "trialmesh/algorithms/learners.hpp"
#include "trialmesh/algorithms/maddpg.hpp"
#include "trialmesh/algorithms/mixer.hpp"
#include "trialmesh/algorithms/replay.hpp"
#include "trialmesh/algorithms/targets.hpp"
#include "trialmesh/algorithms/train_loop.hpp"
