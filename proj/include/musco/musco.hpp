/* Copyright 2026 The musco-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "musco/analysis.hpp"
#include "musco/cpd3.hpp"
#include "musco/dataset.hpp"
#include "musco/driver.hpp"
#include "musco/evbmf.hpp"
#include "musco/idx.hpp"
#include "musco/linalg.hpp"
#include "musco/model_graph.hpp"
#include "musco/model_io.hpp"
#include "musco/model_zoo.hpp"
#include "musco/rank_select.hpp"
#include "musco/run_config.hpp"
#include "musco/svd_factors.hpp"
#include "musco/tensor.hpp"
#include "musco/trainer.hpp"
#include "musco/tucker2.hpp"
