#pragma once

#include "triplesurv/checkpoint.hpp"
#include "triplesurv/commands.hpp"
#include "triplesurv/config.hpp"
#include "triplesurv/data.hpp"
#include "triplesurv/error.hpp"
#include "triplesurv/losses.hpp"
#include "triplesurv/metrics.hpp"
#include "triplesurv/model.hpp"
#include "triplesurv/report.hpp"
#include "triplesurv/synth.hpp"
#include "triplesurv/training.hpp"
