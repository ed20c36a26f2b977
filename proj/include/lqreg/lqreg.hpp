#pragma once

// l^q coefficient-regularized least squares in Gaussian sample dependent
// hypothesis spaces.

#include "error.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "penalty.hpp"
#include "ratelab.hpp"
#include "solvers.hpp"
#include "synth.hpp"
#include "theory.hpp"
