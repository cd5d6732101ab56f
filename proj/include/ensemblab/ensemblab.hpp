#pragma once

// Umbrella header for the ensemblab Monte Carlo laboratory.

#include "ensemblab/cli.hpp"
#include "ensemblab/data_io.hpp"
#include "ensemblab/densities.hpp"
#include "ensemblab/ensemble_builder.hpp"
#include "ensemblab/errors.hpp"
#include "ensemblab/estimators.hpp"
#include "ensemblab/path.hpp"
#include "ensemblab/process.hpp"
#include "ensemblab/rng.hpp"
#include "ensemblab/simulate.hpp"
#include "ensemblab/stats.hpp"
#include "ensemblab/time_grid.hpp"
