#pragma once

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/simplex.hpp"
#include "clq/slackness.hpp"
#include "clq/random.hpp"
#include "clq/trace.hpp"
#include "clq/policy.hpp"
#include "clq/engine.hpp"
#include "clq/stats.hpp"
#include "clq/metrics.hpp"
#include "clq/instances.hpp"
#include "clq/io.hpp"
#include "clq/experiment.hpp"
