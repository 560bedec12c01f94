#pragma once

#include "gpi/bench.hpp"
#include "gpi/config.hpp"
#include "gpi/core.hpp"
#include "gpi/io.hpp"
#include "gpi/maze.hpp"
#include "gpi/metrics.hpp"
#include "gpi/parallel.hpp"
#include "gpi/policy.hpp"
#include "gpi/rollout.hpp"
#include "gpi/store.hpp"
#include "gpi/store_io.hpp"
