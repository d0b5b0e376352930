#pragma once

#include "sgdflow/augment.hpp"
#include "sgdflow/continuous.hpp"
#include "sgdflow/discrete.hpp"
#include "sgdflow/errors.hpp"
#include "sgdflow/moments.hpp"
#include "sgdflow/observables.hpp"
#include "sgdflow/problems.hpp"
#include "sgdflow/rng.hpp"
#include "sgdflow/schedules.hpp"
#include "sgdflow/stats.hpp"
#include "sgdflow/weakerror.hpp"
