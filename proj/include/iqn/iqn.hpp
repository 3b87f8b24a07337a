#pragma once

#include "iqn/adam.hpp"
#include "iqn/agent.hpp"
#include "iqn/checkpoint.hpp"
#include "iqn/config.hpp"
#include "iqn/distortion.hpp"
#include "iqn/envs.hpp"
#include "iqn/error.hpp"
#include "iqn/experiments.hpp"
#include "iqn/grad_check.hpp"
#include "iqn/graph.hpp"
#include "iqn/losses.hpp"
#include "iqn/metrics.hpp"
#include "iqn/networks.hpp"
#include "iqn/plot.hpp"
#include "iqn/random.hpp"
#include "iqn/tensor.hpp"
