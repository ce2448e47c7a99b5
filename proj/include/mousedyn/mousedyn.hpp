#pragma once

#include "mousedyn/action_segmenter.hpp"
#include "mousedyn/dataset_builder.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/evaluation.hpp"
#include "mousedyn/event_model.hpp"
#include "mousedyn/feature_extractor.hpp"
#include "mousedyn/pipeline.hpp"
#include "mousedyn/random_forest.hpp"
#include "mousedyn/synth.hpp"
