#pragma once

// Lag selection and transition estimation for sparse mixture transition
// distribution (MTD) Markov chains.

#include "error.hpp"
#include "rng.hpp"
#include "lag_set.hpp"
#include "sequence.hpp"
#include "sequence_io.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "reference_models.hpp"
#include "counts.hpp"
#include "thresholds.hpp"
#include "lag_select.hpp"
#include "post_estimation.hpp"
#include "oracle.hpp"
#include "experiment.hpp"
