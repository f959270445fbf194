#pragma once

// Umbrella header.

#include "tinyalign/aligner.hpp"
#include "tinyalign/core.hpp"
#include "tinyalign/corpus.hpp"
#include "tinyalign/embeddings.hpp"
#include "tinyalign/evaluate.hpp"
#include "tinyalign/heatmap.hpp"
#include "tinyalign/manifest.hpp"
#include "tinyalign/objective.hpp"
#include "tinyalign/trainer.hpp"
