#pragma once

#include "mondrian/baselines.hpp"
#include "mondrian/box.hpp"
#include "mondrian/dataset.hpp"
#include "mondrian/feature_map.hpp"
#include "mondrian/forest_model.hpp"
#include "mondrian/kernels.hpp"
#include "mondrian/ridge.hpp"
#include "mondrian/rng.hpp"
#include "mondrian/sgd.hpp"
#include "mondrian/sweep.hpp"
#include "mondrian/tree.hpp"
