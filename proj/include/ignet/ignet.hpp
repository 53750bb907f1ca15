#pragma once

#include "backprop.hpp"
#include "config.hpp"
#include "data.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "init_diag.hpp"
#include "model_io.hpp"
#include "network.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "pgm.hpp"
#include "random.hpp"
#include "regularize.hpp"
#include "tensor.hpp"
#include "train.hpp"
