#pragma once

#include "mmsc/types.hpp"
#include "mmsc/rng.hpp"
#include "mmsc/sparse_solvers.hpp"
#include "mmsc/dictionary_learning.hpp"
#include "mmsc/multimodal.hpp"
#include "mmsc/features.hpp"
#include "mmsc/media_frontend.hpp"
#include "mmsc/classify.hpp"
#include "mmsc/gmm.hpp"
#include "mmsc/eval.hpp"
#include "mmsc/io.hpp"
#include "mmsc/synth.hpp"
#include "mmsc/pipeline.hpp"
