#pragma once

#include "ees/types.hpp"
#include "ees/rng.hpp"
#include "ees/stream.hpp"
#include "ees/predictors.hpp"
#include "ees/engine.hpp"
#include "ees/train.hpp"
#include "ees/hec.hpp"
#include "ees/checkpoint.hpp"
#include "ees/hierarchy_io.hpp"
#include "ees/synth.hpp"
#include "ees/bench.hpp"
#include "ees/corpus_io.hpp"
#include "ees/config.hpp"
