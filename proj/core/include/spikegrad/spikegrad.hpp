#pragma once

#include "spikegrad/bench.hpp"
#include "spikegrad/config.hpp"
#include "spikegrad/csv.hpp"
#include "spikegrad/data.hpp"
#include "spikegrad/errors.hpp"
#include "spikegrad/executor.hpp"
#include "spikegrad/gradcheck.hpp"
#include "spikegrad/graph.hpp"
#include "spikegrad/graph_io.hpp"
#include "spikegrad/losses.hpp"
#include "spikegrad/neurons.hpp"
#include "spikegrad/optimizer.hpp"
#include "spikegrad/parameters.hpp"
#include "spikegrad/surrogate.hpp"
#include "spikegrad/tape.hpp"
#include "spikegrad/tensor.hpp"
#include "spikegrad/train.hpp"
