#pragma once

// Convenience umbrella for the whole library.

#include "dynemu/coefgp.hpp"
#include "dynemu/driver.hpp"
#include "dynemu/errors.hpp"
#include "dynemu/io.hpp"
#include "dynemu/linalg.hpp"
#include "dynemu/metrics.hpp"
#include "dynemu/neighborhood.hpp"
#include "dynemu/optimize.hpp"
#include "dynemu/rng.hpp"
#include "dynemu/simulators.hpp"
#include "dynemu/svdmodel.hpp"
