#pragma once

#include "qsb/analytic.hpp"
#include "qsb/bridge.hpp"
#include "qsb/config.hpp"
#include "qsb/csv.hpp"
#include "qsb/errors.hpp"
#include "qsb/grid.hpp"
#include "qsb/hermite.hpp"
#include "qsb/kernels.hpp"
#include "qsb/parallel.hpp"
#include "qsb/sde.hpp"
#include "qsb/sinkhorn.hpp"
#include "qsb/spectral.hpp"
#include "qsb/verify.hpp"
#include "qsb/version.hpp"
