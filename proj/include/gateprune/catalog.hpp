#pragma once

#include "gateprune/model_spec.hpp"

namespace gateprune {

// Named built-in model specs: vgg16_custom, resnet56, mini_vgg8, mini_resnet.
ModelSpec builtin_spec(const std::string& name);
std::vector<std::string> builtin_spec_names();

}  // namespace gateprune
