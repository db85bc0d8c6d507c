#pragma once

#include <string>

#include "reffakd/model.hpp"

namespace reffakd {

/// Convolutional autoencoder: three stride-2 conv stages with 12/24/48
/// filters (kernel 4, pad 1, ReLU), decoder mirrored with transposed convs
/// and a Sigmoid output. The deepest encoder activation carries the tap
/// "bottleneck". Requires h, w >= 8 so all three stages have room.
ModelSpec build_cae(int channels, int h, int w);

/// Flat dimensionality of the CAE bottleneck for a given input size.
int cae_bottleneck_dim(int h, int w);

/// Small classifier: Conv(->6,k5,p2) + ReLU + MaxPool2 + Conv(6->16,k5) +
/// ReLU + MaxPool2 + Flatten + Linear(->120) + ReLU + Linear(120->classes).
/// Requires h, w >= 28.
ModelSpec build_lenet5(int num_classes, int channels, int h, int w);

/// Residual classifier, depth 18 (basic blocks, [2,2,2,2]) or 50 (bottleneck
/// blocks, [3,4,6,3]). Inputs below 64x64 get a 3x3 stride-1 stem with no
/// initial pool; 64x64 and above get the 7x7 stride-2 stem plus a 3x3
/// stride-2 max pool. Global average pool feeds the linear head, so the
/// final feature map must be square.
ModelSpec build_resnet(int depth, int num_classes, int channels, int h, int w);

/// Dispatch by family name: "cae", "lenet5", "resnet18", "resnet50".
/// num_classes is ignored for "cae".
ModelSpec build_named_model(const std::string& name, int num_classes, int channels, int h, int w);

}  // namespace reffakd
