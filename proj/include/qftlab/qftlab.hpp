#pragma once

#include "qftlab/core.hpp"
#include "qftlab/errors.hpp"
#include "qftlab/io.hpp"
#include "qftlab/lattice.hpp"
#include "qftlab/localization.hpp"
#include "qftlab/propagators.hpp"
#include "qftlab/quadrature.hpp"
#include "qftlab/source.hpp"
#include "qftlab/source_dynamics.hpp"
#include "qftlab/special_functions.hpp"
