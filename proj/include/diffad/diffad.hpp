#pragma once

// convenience header: pulls in the whole library

#include "diffad/bench.hpp"
#include "diffad/config.hpp"
#include "diffad/copod.hpp"
#include "diffad/dataset.hpp"
#include "diffad/denoiser.hpp"
#include "diffad/detector.hpp"
#include "diffad/diffusion.hpp"
#include "diffad/error.hpp"
#include "diffad/iforest.hpp"
#include "diffad/metrics.hpp"
#include "diffad/ocsvm.hpp"
#include "diffad/rng.hpp"
#include "diffad/schedule.hpp"
#include "diffad/serialize.hpp"
#include "diffad/tape.hpp"
#include "diffad/tensor.hpp"
