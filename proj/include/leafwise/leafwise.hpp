#pragma once

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/linear_solve.hpp"
#include "leafwise/schrodinger.hpp"
#include "leafwise/attractor_theory.hpp"
#include "leafwise/heatflow.hpp"
#include "leafwise/circle_dynamics.hpp"
#include "leafwise/curvature.hpp"
#include "leafwise/param_sweep.hpp"
