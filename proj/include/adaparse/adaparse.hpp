#pragma once

// Umbrella header.

#include "adaparse/config.hpp"
#include "adaparse/corpus.hpp"
#include "adaparse/harness.hpp"
#include "adaparse/metrics.hpp"
#include "adaparse/parsers.hpp"
#include "adaparse/pool.hpp"
#include "adaparse/scheduler.hpp"
#include "adaparse/selector.hpp"
#include "adaparse/tokenize.hpp"
#include "adaparse/training.hpp"
#include "adaparse/zip.hpp"
