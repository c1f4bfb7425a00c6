#pragma once

// Umbrella header: pulls in the whole library.

#include "cacheflow/adam.hpp"
#include "cacheflow/cache.hpp"
#include "cacheflow/cnf.hpp"
#include "cacheflow/codec.hpp"
#include "cacheflow/config.hpp"
#include "cacheflow/datasets.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/gmm.hpp"
#include "cacheflow/gru.hpp"
#include "cacheflow/inference.hpp"
#include "cacheflow/kde.hpp"
#include "cacheflow/metrics.hpp"
#include "cacheflow/mlp.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/parallel.hpp"
#include "cacheflow/pose.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"
#include "cacheflow/tensor.hpp"
#include "cacheflow/train.hpp"
