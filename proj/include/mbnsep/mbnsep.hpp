// Copyright 2026 The mbnsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "mbnsep/config.hpp"
#include "mbnsep/dpcl.hpp"
#include "mbnsep/features.hpp"
#include "mbnsep/kmeans.hpp"
#include "mbnsep/mbn.hpp"
#include "mbnsep/mbn_io.hpp"
#include "mbnsep/metrics.hpp"
#include "mbnsep/parallel.hpp"
#include "mbnsep/rng.hpp"
#include "mbnsep/separate.hpp"
#include "mbnsep/signal.hpp"
#include "mbnsep/simulate.hpp"
#include "mbnsep/tensor_io.hpp"
#include "mbnsep/util.hpp"
#include "mbnsep/wav.hpp"
