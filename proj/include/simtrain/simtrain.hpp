#pragma once

#include "simtrain/architectures.hpp"
#include "simtrain/compare.hpp"
#include "simtrain/data/benchmark.hpp"
#include "simtrain/data/csv.hpp"
#include "simtrain/data/normalize.hpp"
#include "simtrain/data/plant.hpp"
#include "simtrain/data/resample.hpp"
#include "simtrain/data/signal.hpp"
#include "simtrain/data/trajectory.hpp"
#include "simtrain/gradcheck.hpp"
#include "simtrain/model.hpp"
#include "simtrain/model_spec.hpp"
#include "simtrain/ops.hpp"
#include "simtrain/reference.hpp"
#include "simtrain/rng.hpp"
#include "simtrain/simulation.hpp"
#include "simtrain/tensor.hpp"
#include "simtrain/training/config.hpp"
#include "simtrain/training/grid_search.hpp"
#include "simtrain/training/losses.hpp"
#include "simtrain/training/optimizer.hpp"
#include "simtrain/training/trainer.hpp"
