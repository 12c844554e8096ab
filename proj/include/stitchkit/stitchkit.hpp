#pragma once

#include "stitchkit/error.hpp"
#include "stitchkit/rng.hpp"
#include "stitchkit/tensor.hpp"
#include "stitchkit/linalg.hpp"
#include "stitchkit/layer.hpp"
#include "stitchkit/network.hpp"
#include "stitchkit/dataset.hpp"
#include "stitchkit/train.hpp"
#include "stitchkit/cka.hpp"
#include "stitchkit/stitcher.hpp"
#include "stitchkit/generator.hpp"
#include "stitchkit/evaluate.hpp"
#include "stitchkit/snet_io.hpp"
#include "stitchkit/report.hpp"
