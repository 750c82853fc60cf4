#pragma once

#include "impact/closedform.hpp"
#include "impact/driver.hpp"
#include "impact/error.hpp"
#include "impact/gexpect.hpp"
#include "impact/interpolation.hpp"
#include "impact/lattice.hpp"
#include "impact/market.hpp"
#include "impact/optimizer.hpp"
#include "impact/parallel.hpp"
#include "impact/time_function.hpp"
#include "impact/utility.hpp"
#include "impact/valuegrid.hpp"
