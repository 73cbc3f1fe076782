#pragma once

#include "gridtwin/community.hpp"
#include "gridtwin/data.hpp"
#include "gridtwin/devices.hpp"
#include "gridtwin/env.hpp"
#include "gridtwin/experiments.hpp"
#include "gridtwin/kpi.hpp"
#include "gridtwin/nn.hpp"
#include "gridtwin/rbc.hpp"
#include "gridtwin/sac.hpp"
#include "gridtwin/synthetic.hpp"
#include "gridtwin/tariff.hpp"
