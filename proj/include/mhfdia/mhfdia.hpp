#pragma once

#include "mhfdia/attack_engine.hpp"
#include "mhfdia/baselines.hpp"
#include "mhfdia/config.hpp"
#include "mhfdia/error.hpp"
#include "mhfdia/estimators.hpp"
#include "mhfdia/harness.hpp"
#include "mhfdia/linalg.hpp"
#include "mhfdia/plant.hpp"
#include "mhfdia/power_grid.hpp"
#include "mhfdia/trace.hpp"
#include "mhfdia/ukf.hpp"
#include "mhfdia/vehicle.hpp"
