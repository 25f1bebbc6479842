#pragma once

#include "fedbud/common.hpp"
#include "fedbud/config.hpp"
#include "fedbud/config_io.hpp"
#include "fedbud/convergence_bound.hpp"
#include "fedbud/economics.hpp"
#include "fedbud/equilibrium.hpp"
#include "fedbud/experiments.hpp"
#include "fedbud/fl_sim.hpp"
#include "fedbud/oracle.hpp"
#include "fedbud/queues.hpp"
#include "fedbud/rng.hpp"
#include "fedbud/strategy_core.hpp"
#include "fedbud/task.hpp"
