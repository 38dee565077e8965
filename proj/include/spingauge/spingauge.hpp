#pragma once

#include "spingauge/basis.hpp"
#include "spingauge/config.hpp"
#include "spingauge/dynamics.hpp"
#include "spingauge/effective.hpp"
#include "spingauge/experiments.hpp"
#include "spingauge/io.hpp"
#include "spingauge/lattice.hpp"
#include "spingauge/operators.hpp"
#include "spingauge/runner.hpp"
