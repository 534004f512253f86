#pragma once

/// Umbrella header for the whole library.

#include "tdens/errors.hpp"
#include "tdens/features.hpp"
#include "tdens/gradcheck.hpp"
#include "tdens/groundtruth.hpp"
#include "tdens/inference.hpp"
#include "tdens/io.hpp"
#include "tdens/mt_losses.hpp"
#include "tdens/optimizer.hpp"
#include "tdens/pipeline.hpp"
#include "tdens/rng.hpp"
#include "tdens/synthgen.hpp"
#include "tdens/types.hpp"
