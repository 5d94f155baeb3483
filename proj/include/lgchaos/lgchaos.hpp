#pragma once

#include "lgchaos/chaos_flow.hpp"
#include "lgchaos/density_grid.hpp"
#include "lgchaos/errors.hpp"
#include "lgchaos/fokker_planck.hpp"
#include "lgchaos/harness.hpp"
#include "lgchaos/hermite.hpp"
#include "lgchaos/mc_reference.hpp"
#include "lgchaos/numerics.hpp"
#include "lgchaos/observables.hpp"
#include "lgchaos/potentials.hpp"
#include "lgchaos/rng.hpp"
