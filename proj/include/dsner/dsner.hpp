#pragma once

// Umbrella header: the full distantly-supervised NER toolkit.

#include "dsner/binio.hpp"      // IWYU pragma: export
#include "dsner/checkpoint.hpp" // IWYU pragma: export
#include "dsner/common.hpp"     // IWYU pragma: export
#include "dsner/config.hpp"     // IWYU pragma: export
#include "dsner/conll.hpp"      // IWYU pragma: export
#include "dsner/gazetteer.hpp"  // IWYU pragma: export
#include "dsner/knn.hpp"        // IWYU pragma: export
#include "dsner/losses.hpp"     // IWYU pragma: export
#include "dsner/mixup.hpp"      // IWYU pragma: export
#include "dsner/model.hpp"      // IWYU pragma: export
#include "dsner/noise.hpp"      // IWYU pragma: export
#include "dsner/rng.hpp"        // IWYU pragma: export
#include "dsner/spans.hpp"      // IWYU pragma: export
#include "dsner/synthetic.hpp"  // IWYU pragma: export
#include "dsner/trainer.hpp"    // IWYU pragma: export
#include "dsner/types.hpp"      // IWYU pragma: export
