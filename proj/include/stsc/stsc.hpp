// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stsc/audio.hpp"
#include "stsc/clustering.hpp"
#include "stsc/corpus.hpp"
#include "stsc/error.hpp"
#include "stsc/evaluation.hpp"
#include "stsc/experiments.hpp"
#include "stsc/features.hpp"
#include "stsc/model.hpp"
#include "stsc/nn/gradcheck.hpp"
#include "stsc/nn/layers.hpp"
#include "stsc/nn/tensor.hpp"
#include "stsc/random.hpp"
#include "stsc/synth.hpp"
#include "stsc/training.hpp"
