#pragma once

#include "gplm/bandwidth.hpp"
#include "gplm/dataset.hpp"
#include "gplm/errors.hpp"
#include "gplm/family.hpp"
#include "gplm/inference.hpp"
#include "gplm/io.hpp"
#include "gplm/kernel.hpp"
#include "gplm/loss.hpp"
#include "gplm/profile.hpp"
#include "gplm/rng.hpp"
#include "gplm/scores.hpp"
#include "gplm/simulation.hpp"
#include "gplm/smoothing.hpp"
