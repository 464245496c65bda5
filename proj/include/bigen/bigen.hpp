#pragma once

#include "bigen/attribution.hpp"
#include "bigen/dag.hpp"
#include "bigen/errors.hpp"
#include "bigen/evaluation.hpp"
#include "bigen/io.hpp"
#include "bigen/mechanism.hpp"
#include "bigen/noise.hpp"
#include "bigen/scenarios.hpp"
#include "bigen/scoring.hpp"
#include "bigen/shapley.hpp"
