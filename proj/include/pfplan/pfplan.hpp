#pragma once

// Umbrella header: particle-filtering-based sequential planning on partially
// observed linear dynamical systems, the coupled exact-inference process, and
// the particle-complexity analysis toolkit.

#include "pfplan/analysis.hpp"
#include "pfplan/config.hpp"
#include "pfplan/coupled.hpp"
#include "pfplan/errors.hpp"
#include "pfplan/harness.hpp"
#include "pfplan/lowerbound.hpp"
#include "pfplan/model.hpp"
#include "pfplan/noise.hpp"
#include "pfplan/numerics.hpp"
#include "pfplan/oracle.hpp"
#include "pfplan/parallel.hpp"
#include "pfplan/pf.hpp"
#include "pfplan/rng.hpp"
#include "pfplan/validate.hpp"
