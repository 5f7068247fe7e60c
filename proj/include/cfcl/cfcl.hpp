#pragma once

#include "cfcl/clustering.hpp"
#include "cfcl/common.hpp"
#include "cfcl/exchange.hpp"
#include "cfcl/experiment.hpp"
#include "cfcl/federation.hpp"
#include "cfcl/io/config.hpp"
#include "cfcl/io/dataset.hpp"
#include "cfcl/io/idx.hpp"
#include "cfcl/io/report.hpp"
#include "cfcl/io/svg.hpp"
#include "cfcl/metrics.hpp"
#include "cfcl/model.hpp"
#include "cfcl/topology.hpp"
