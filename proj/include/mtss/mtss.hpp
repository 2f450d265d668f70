// Umbrella header.
#pragma once

#include "mtss/agents.hpp"
#include "mtss/beta_logistic.hpp"
#include "mtss/catalog_io.hpp"
#include "mtss/core.hpp"
#include "mtss/environments.hpp"
#include "mtss/grid.hpp"
#include "mtss/harness.hpp"
#include "mtss/lmm.hpp"
#include "mtss/optimizers.hpp"
#include "mtss/rng.hpp"
#include "mtss/version.hpp"
