#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reffakd/tensor.hpp"

namespace reffakd {

enum class LayerKind {
  kConv2d,
  kConvTranspose2d,
  kLinear,
  kReLU,
  kSigmoid,
  kMaxPool2d,
  kAvgPool2d,
  kBatchNorm2d,
  kFlatten,
  kAdd,
};

const char* layer_kind_name(LayerKind kind);

// Wiring values for LayerDef::input and LayerDef::rhs.
inline constexpr int kFromPrevious = -2;
inline constexpr int kFromModelInput = -1;
inline constexpr int kNoInput = -3;

/// One layer of a model graph. Which fields matter depends on `kind`;
/// `input` selects the producing layer (default: the previous one) so
/// residual branches can reference earlier outputs, and Add joins `input`
/// with `rhs`.
struct LayerDef {
  LayerKind kind = LayerKind::kReLU;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int outpad = 0;  // conv transpose only
  int channels = 0;  // batchnorm only
  bool bias = true;
  int input = kFromPrevious;
  int rhs = kNoInput;  // add only
  std::string tap;  // optional name exposing this layer's output

  bool operator==(const LayerDef&) const = default;
};

struct ModelSpec {
  std::string name;
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  std::vector<LayerDef> layers;

  bool operator==(const ModelSpec&) const = default;
};

/// Structural validation: hyperparameter ranges, wiring indices, unique taps.
/// Throws std::invalid_argument naming the offending layer.
void validate_model_spec(const ModelSpec& spec);

// Text format: `name <id>` line, `input <c> <h> <w>` line, then one layer per
// line as `kind key=value ...`. `#` starts a comment. Round-trips exactly.
ModelSpec parse_model_spec(const std::string& text);
std::string serialize_model_spec(const ModelSpec& spec);
ModelSpec load_model_spec(const std::string& path);
void save_model_spec(const ModelSpec& spec, const std::string& path);

/// A spec compiled to parameter tensors. Construction seeds every parameter
/// deterministically (He-style normal fan-in scaling for weights, zero
/// biases, identity batch norm).
class Model {
 public:
  Model(ModelSpec spec, uint64_t seed);

  const ModelSpec& spec() const { return spec_; }

  /// x must be [batch, in_channels, in_height, in_width]. `training` selects
  /// batch-norm behavior; gradient recording follows the global switch.
  TensorPtr forward(const TensorPtr& x, bool training);
  /// Runs only as far as the layer tapped with `tap` and returns its output.
  TensorPtr forward_tap(const TensorPtr& x, const std::string& tap, bool training);
  bool has_tap(const std::string& tap) const;

  /// Trainable parameters in graph order (weights, biases, bn scale/shift).
  std::vector<TensorPtr> parameters() const;
  std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
  int64_t parameter_count() const;

  // Binary checkpoint: "RKDT" magic, u32 version, then one record per tensor
  // in graph order (u32 name length + name, u64 rank, u64 extents, raw f64),
  // all little-endian. Batch-norm running buffers are included.
  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

 private:
  struct LayerState {
    TensorPtr weight;
    TensorPtr bias;
    TensorPtr gamma;
    TensorPtr beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
  };

  TensorPtr run(const TensorPtr& x, int until_layer, bool training);

  template <typename Self, typename Fn>
  static void visit_records(Self& self, Fn&& fn);

  ModelSpec spec_;
  std::vector<LayerState> states_;
};

}  // namespace reffakd
