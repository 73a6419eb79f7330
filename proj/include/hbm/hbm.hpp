#pragma once

#include "hbm/checks.hpp"
#include "hbm/commands.hpp"
#include "hbm/config.hpp"
#include "hbm/drift.hpp"
#include "hbm/errors.hpp"
#include "hbm/estimator.hpp"
#include "hbm/geometry.hpp"
#include "hbm/kernels.hpp"
#include "hbm/parallel.hpp"
#include "hbm/parametrix.hpp"
#include "hbm/payoff.hpp"
#include "hbm/quad_math.hpp"
#include "hbm/quadrature.hpp"
#include "hbm/report.hpp"
#include "hbm/rng.hpp"
#include "hbm/simulator.hpp"
#include "hbm/stats.hpp"
#include "hbm/theta.hpp"
