#pragma once

#include "latmech/concentration.hpp"
#include "latmech/error.hpp"
#include "latmech/experiment.hpp"
#include "latmech/harness.hpp"
#include "latmech/joint_fixtures.hpp"
#include "latmech/latent_model.hpp"
#include "latmech/mechanisms.hpp"
#include "latmech/query_protocol.hpp"
#include "latmech/random.hpp"
#include "latmech/robustify.hpp"
#include "latmech/stats.hpp"
#include "latmech/valuation.hpp"
