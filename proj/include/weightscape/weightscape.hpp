#pragma once

#include "weightscape/types.hpp"
#include "weightscape/format.hpp"
#include "weightscape/constraints.hpp"
#include "weightscape/estimators.hpp"
#include "weightscape/diagnostics.hpp"
#include "weightscape/simulation.hpp"
#include "weightscape/conformal.hpp"
#include "weightscape/io.hpp"
