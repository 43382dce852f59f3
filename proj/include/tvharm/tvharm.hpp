#pragma once

#include "tvharm/basis.hpp"
#include "tvharm/estimator.hpp"
#include "tvharm/measures.hpp"
#include "tvharm/model.hpp"
#include "tvharm/pipeline.hpp"
#include "tvharm/resample.hpp"
#include "tvharm/rng.hpp"
#include "tvharm/synth.hpp"
#include "tvharm/vocal_tract.hpp"
#include "tvharm/wav.hpp"
