#pragma once

#include <spvar/core.hpp>
#include <spvar/var_model.hpp>
#include <spvar/regression.hpp>
#include <spvar/spatial.hpp>
#include <spvar/stability.hpp>
#include <spvar/two_step.hpp>
#include <spvar/scenario.hpp>
#include <spvar/metrics.hpp>
#include <spvar/preprocess.hpp>
#include <spvar/io.hpp>
#include <spvar/benchmark.hpp>
#include <spvar/config.hpp>
