#pragma once

#include "rbcd/core.hpp"
#include "rbcd/experiment.hpp"
#include "rbcd/io.hpp"
#include "rbcd/metrics.hpp"
#include "rbcd/operators.hpp"
#include "rbcd/penalties.hpp"
#include "rbcd/problems.hpp"
#include "rbcd/radon.hpp"
#include "rbcd/random.hpp"
#include "rbcd/regularized_solver.hpp"
#include "rbcd/solver.hpp"
#include "rbcd/tv.hpp"
