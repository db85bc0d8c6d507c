#include "reffakd/model_zoo.hpp"

#include <stdexcept>

namespace reffakd {

namespace {

struct SpecBuilder {
  ModelSpec spec;

  int push(LayerDef L) {
    spec.layers.push_back(std::move(L));
    return static_cast<int>(spec.layers.size()) - 1;
  }
  int last() const { return static_cast<int>(spec.layers.size()) - 1; }

  int conv(int in, int out, int k, int s, int p, bool bias, int from = kFromPrevious) {
    LayerDef L;
    L.kind = LayerKind::kConv2d;
    L.in_ch = in;
    L.out_ch = out;
    L.kernel = k;
    L.stride = s;
    L.pad = p;
    L.bias = bias;
    L.input = from;
    return push(L);
  }
  int conv_t(int in, int out, int k, int s, int p, int outpad, bool bias) {
    LayerDef L;
    L.kind = LayerKind::kConvTranspose2d;
    L.in_ch = in;
    L.out_ch = out;
    L.kernel = k;
    L.stride = s;
    L.pad = p;
    L.outpad = outpad;
    L.bias = bias;
    return push(L);
  }
  int linear(int in, int out, bool bias = true) {
    LayerDef L;
    L.kind = LayerKind::kLinear;
    L.in_ch = in;
    L.out_ch = out;
    L.bias = bias;
    return push(L);
  }
  int relu() {
    LayerDef L;
    L.kind = LayerKind::kReLU;
    return push(L);
  }
  int sigmoid() {
    LayerDef L;
    L.kind = LayerKind::kSigmoid;
    return push(L);
  }
  int maxpool(int k, int s, int p = 0) {
    LayerDef L;
    L.kind = LayerKind::kMaxPool2d;
    L.kernel = k;
    L.stride = s;
    L.pad = p;
    return push(L);
  }
  int avgpool(int k, int s, int p = 0) {
    LayerDef L;
    L.kind = LayerKind::kAvgPool2d;
    L.kernel = k;
    L.stride = s;
    L.pad = p;
    return push(L);
  }
  int bn(int channels) {
    LayerDef L;
    L.kind = LayerKind::kBatchNorm2d;
    L.channels = channels;
    return push(L);
  }
  int flatten() {
    LayerDef L;
    L.kind = LayerKind::kFlatten;
    return push(L);
  }
  int add_from(int lhs, int rhs) {
    LayerDef L;
    L.kind = LayerKind::kAdd;
    L.input = lhs;
    L.rhs = rhs;
    return push(L);
  }
};

int down2(int x) { return (x - 2) / 2 + 1; }  // conv k4 s2 p1

void check_positive(int channels, int h, int w, const char* who) {
  if (channels < 1 || h < 1 || w < 1)
    throw std::invalid_argument(std::string(who) + ": input extents must be positive");
}

}  // namespace

int cae_bottleneck_dim(int h, int w) {
  if (h < 8 || w < 8)
    throw std::invalid_argument("cae: input must be at least 8x8 for three stride-2 stages");
  int bh = h, bw = w;
  for (int i = 0; i < 3; ++i) {
    bh = down2(bh);
    bw = down2(bw);
  }
  return 48 * bh * bw;
}

ModelSpec build_cae(int channels, int h, int w) {
  check_positive(channels, h, w, "cae");
  if (h < 8 || w < 8)
    throw std::invalid_argument("cae: input must be at least 8x8 for three stride-2 stages");
  const int filters[3] = {12, 24, 48};

  int hs[4] = {h, 0, 0, 0};
  int ws[4] = {w, 0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    hs[i + 1] = down2(hs[i]);
    ws[i + 1] = down2(ws[i]);
  }

  SpecBuilder b;
  b.spec.name = "cae";
  b.spec.in_channels = channels;
  b.spec.in_height = h;
  b.spec.in_width = w;

  int prev_c = channels;
  for (int i = 0; i < 3; ++i) {
    b.conv(prev_c, filters[i], 4, 2, 1, true);
    const int r = b.relu();
    if (i == 2) b.spec.layers[r].tap = "bottleneck";
    prev_c = filters[i];
  }
  for (int i = 2; i >= 0; --i) {
    // Transposed conv k4 s2 p1 maps n to 2n + outpad, so restoring the
    // encoder's pre-stage extent needs outpad = extent - 2 * downsampled.
    const int oph = hs[i] - 2 * hs[i + 1];
    const int opw = ws[i] - 2 * ws[i + 1];
    if (oph != opw)
      throw std::invalid_argument(
          "cae: height and width parities diverge at stage " + std::to_string(i) +
          "; a square output padding cannot restore both extents");
    const int out_c = i > 0 ? filters[i - 1] : channels;
    b.conv_t(filters[i], out_c, 4, 2, 1, oph, true);
    if (i > 0)
      b.relu();
    else
      b.sigmoid();
  }
  validate_model_spec(b.spec);
  return b.spec;
}

ModelSpec build_lenet5(int num_classes, int channels, int h, int w) {
  check_positive(channels, h, w, "lenet5");
  if (num_classes < 1) throw std::invalid_argument("lenet5: num_classes must be >= 1");
  if (h < 28 || w < 28) throw std::invalid_argument("lenet5: input must be at least 28x28");

  const int h2 = (h - 2) / 2 + 1, w2 = (w - 2) / 2 + 1;  // pool after first conv
  const int h3 = h2 - 4, w3 = w2 - 4;                    // 5x5 conv, no pad
  const int h4 = (h3 - 2) / 2 + 1, w4 = (w3 - 2) / 2 + 1;
  const int flat = 16 * h4 * w4;

  SpecBuilder b;
  b.spec.name = "lenet5";
  b.spec.in_channels = channels;
  b.spec.in_height = h;
  b.spec.in_width = w;
  b.conv(channels, 6, 5, 1, 2, true);
  b.relu();
  b.maxpool(2, 2);
  b.conv(6, 16, 5, 1, 0, true);
  b.relu();
  b.maxpool(2, 2);
  b.flatten();
  b.linear(flat, 120);
  b.relu();
  b.linear(120, num_classes);
  validate_model_spec(b.spec);
  return b.spec;
}

ModelSpec build_resnet(int depth, int num_classes, int channels, int h, int w) {
  if (depth != 18 && depth != 50) throw std::invalid_argument("resnet: depth must be 18 or 50");
  check_positive(channels, h, w, "resnet");
  if (num_classes < 1) throw std::invalid_argument("resnet: num_classes must be >= 1");

  SpecBuilder b;
  b.spec.name = depth == 18 ? "resnet18" : "resnet50";
  b.spec.in_channels = channels;
  b.spec.in_height = h;
  b.spec.in_width = w;

  int cur_h = h, cur_w = w;
  const bool big = h >= 64 && w >= 64;
  if (big) {
    b.conv(channels, 64, 7, 2, 3, false);
    cur_h = (cur_h - 1) / 2 + 1;
    cur_w = (cur_w - 1) / 2 + 1;
    b.bn(64);
    b.relu();
    b.maxpool(3, 2, 1);
    cur_h = (cur_h - 1) / 2 + 1;
    cur_w = (cur_w - 1) / 2 + 1;
  } else {
    b.conv(channels, 64, 3, 1, 1, false);
    b.bn(64);
    b.relu();
  }

  auto basic_block = [&b](int in_ch, int out_ch, int stride) {
    const int in_idx = b.last();
    b.conv(in_ch, out_ch, 3, stride, 1, false);
    b.bn(out_ch);
    b.relu();
    b.conv(out_ch, out_ch, 3, 1, 1, false);
    const int main_idx = b.bn(out_ch);
    int short_idx = in_idx;
    if (stride != 1 || in_ch != out_ch) {
      b.conv(in_ch, out_ch, 1, stride, 0, false, in_idx);
      short_idx = b.bn(out_ch);
    }
    b.add_from(main_idx, short_idx);
    b.relu();
  };
  auto bottleneck_block = [&b](int in_ch, int width, int stride) {
    const int out_ch = width * 4;
    const int in_idx = b.last();
    b.conv(in_ch, width, 1, 1, 0, false);
    b.bn(width);
    b.relu();
    b.conv(width, width, 3, stride, 1, false);
    b.bn(width);
    b.relu();
    b.conv(width, out_ch, 1, 1, 0, false);
    const int main_idx = b.bn(out_ch);
    int short_idx = in_idx;
    if (stride != 1 || in_ch != out_ch) {
      b.conv(in_ch, out_ch, 1, stride, 0, false, in_idx);
      short_idx = b.bn(out_ch);
    }
    b.add_from(main_idx, short_idx);
    b.relu();
  };

  const int widths[4] = {64, 128, 256, 512};
  const int counts18[4] = {2, 2, 2, 2};
  const int counts50[4] = {3, 4, 6, 3};
  const int expansion = depth == 18 ? 1 : 4;
  int in_ch = 64;
  for (int stage = 0; stage < 4; ++stage) {
    const int count = depth == 18 ? counts18[stage] : counts50[stage];
    for (int blk = 0; blk < count; ++blk) {
      const int stride = (stage > 0 && blk == 0) ? 2 : 1;
      if (depth == 18)
        basic_block(in_ch, widths[stage], stride);
      else
        bottleneck_block(in_ch, widths[stage], stride);
      in_ch = widths[stage] * expansion;
      if (stride == 2) {
        cur_h = (cur_h - 1) / 2 + 1;
        cur_w = (cur_w - 1) / 2 + 1;
      }
    }
  }

  if (cur_h != cur_w)
    throw std::invalid_argument("resnet: final feature map is " + std::to_string(cur_h) + "x" +
                                std::to_string(cur_w) +
                                "; global average pooling needs a square map");
  b.avgpool(cur_h, cur_h);
  b.flatten();
  b.linear(in_ch, num_classes);
  validate_model_spec(b.spec);
  return b.spec;
}

ModelSpec build_named_model(const std::string& name, int num_classes, int channels, int h,
                            int w) {
  if (name == "cae") return build_cae(channels, h, w);
  if (name == "lenet5") return build_lenet5(num_classes, channels, h, w);
  if (name == "resnet18") return build_resnet(18, num_classes, channels, h, w);
  if (name == "resnet50") return build_resnet(50, num_classes, channels, h, w);
  throw std::invalid_argument("unknown model family '" + name +
                              "' (expected cae, lenet5, resnet18, or resnet50)");
}

}  // namespace reffakd
