#pragma once

#include "sentfeed/core_series.hpp"
#include "sentfeed/econometrics.hpp"
#include "sentfeed/error.hpp"
#include "sentfeed/fit_types.hpp"
#include "sentfeed/inference.hpp"
#include "sentfeed/month.hpp"
#include "sentfeed/panel.hpp"
#include "sentfeed/portfolio.hpp"
#include "sentfeed/structural.hpp"
