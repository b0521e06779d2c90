#pragma once

// Umbrella header: the full lazylab library.

#include "lazylab/rng.hpp"
#include "lazylab/io.hpp"
#include "lazylab/dataset.hpp"
#include "lazylab/kernels.hpp"
#include "lazylab/model.hpp"
#include "lazylab/dynamics.hpp"
#include "lazylab/theory.hpp"
#include "lazylab/experiments.hpp"
