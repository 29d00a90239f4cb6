#pragma once

// Umbrella header for the compression-aware fine-tuning toolkit.

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "hvp.hpp"
#include "model.hpp"
#include "numfmt.hpp"
#include "optim.hpp"
#include "param.hpp"
#include "prune.hpp"
#include "quant.hpp"
#include "rng.hpp"
#include "sharpness.hpp"
#include "suite.hpp"
#include "tape.hpp"
#include "tensor.hpp"
#include "train.hpp"
