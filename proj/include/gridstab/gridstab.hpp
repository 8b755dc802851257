#pragma once

#include "gridstab/analysis.hpp"
#include "gridstab/case_model.hpp"
#include "gridstab/effective_network.hpp"
#include "gridstab/errors.hpp"
#include "gridstab/io.hpp"
#include "gridstab/optimize.hpp"
#include "gridstab/parallel.hpp"
#include "gridstab/pipeline.hpp"
#include "gridstab/power_flow.hpp"
#include "gridstab/rng.hpp"
#include "gridstab/stability.hpp"
#include "gridstab/uncertainty.hpp"
