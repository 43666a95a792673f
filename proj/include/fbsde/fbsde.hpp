#pragma once

#include "fbsde/brownian.hpp"
#include "fbsde/bsde.hpp"
#include "fbsde/control.hpp"
#include "fbsde/dpp.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/fields.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/hamiltonian.hpp"
#include "fbsde/lq.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/problem.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/time_grid.hpp"
