#pragma once

#include "hiepm/numerics.hpp"
#include "hiepm/rng.hpp"
#include "hiepm/array_channel.hpp"
#include "hiepm/codebook.hpp"
#include "hiepm/posterior.hpp"
#include "hiepm/policies.hpp"
#include "hiepm/bounds.hpp"
#include "hiepm/sim.hpp"
#include "hiepm/config.hpp"
