#pragma once

// Umbrella header.

#include "vif/attributor.hpp"
#include "vif/coxloss.hpp"
#include "vif/decomposable.hpp"
#include "vif/embedloss.hpp"
#include "vif/errors.hpp"
#include "vif/harness.hpp"
#include "vif/log.hpp"
#include "vif/losscore.hpp"
#include "vif/ltrloss.hpp"
#include "vif/numkit.hpp"
#include "vif/rng.hpp"
#include "vif/version.hpp"
