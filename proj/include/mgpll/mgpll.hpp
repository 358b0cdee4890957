#pragma once

// Umbrella header for the whole library.

#include "mgpll/checkpoint.hpp"
#include "mgpll/dataset.hpp"
#include "mgpll/eval.hpp"
#include "mgpll/losses.hpp"
#include "mgpll/matrix.hpp"
#include "mgpll/mlp.hpp"
#include "mgpll/model.hpp"
#include "mgpll/plknn.hpp"
#include "mgpll/rng.hpp"
#include "mgpll/train.hpp"
