#pragma once

#include "hsrkan/errors.hpp"
#include "hsrkan/parallel.hpp"
#include "hsrkan/tensor.hpp"
#include "hsrkan/ops.hpp"
#include "hsrkan/bspline.hpp"
#include "hsrkan/kan_layer.hpp"
#include "hsrkan/model.hpp"
#include "hsrkan/loss.hpp"
#include "hsrkan/degradation.hpp"
#include "hsrkan/metrics.hpp"
#include "hsrkan/trainer.hpp"
#include "hsrkan/gradcheck.hpp"

namespace hsrkan {
inline constexpr const char* kVersion = "0.1.0";
}
