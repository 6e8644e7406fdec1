// Umbrella header.
#pragma once

#include "zdc/attention.hpp"
#include "zdc/corpus.hpp"
#include "zdc/experiment.hpp"
#include "zdc/forward.hpp"
#include "zdc/importance.hpp"
#include "zdc/kmeans.hpp"
#include "zdc/kv_cache.hpp"
#include "zdc/ledger.hpp"
#include "zdc/matrix.hpp"
#include "zdc/matrix_io.hpp"
#include "zdc/metrics.hpp"
#include "zdc/model.hpp"
#include "zdc/plan.hpp"
#include "zdc/planner.hpp"
#include "zdc/rotation.hpp"
#include "zdc/sp_sim.hpp"
#include "zdc/svd.hpp"
