#include "reffakd/profiler.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace reffakd {

namespace {

struct Shape {
  // rank 3 (c,h,w) or rank 1 (features)
  std::vector<int> dims;
  bool spatial() const { return dims.size() == 3; }
};

[[noreturn]] void fail_layer(size_t idx, LayerKind kind, const std::string& msg) {
  throw std::invalid_argument("profile: layer " + std::to_string(idx) + " (" +
                              layer_kind_name(kind) + "): " + msg);
}

int conv_out(int extent, int kernel, int stride, int pad) {
  return (extent + 2 * pad - kernel) / stride + 1;
}

}  // namespace

ResourceReport profile(const ModelSpec& spec) {
  validate_model_spec(spec);
  ResourceReport report;
  std::vector<Shape> shapes(spec.layers.size());
  const Shape input{{spec.in_channels, spec.in_height, spec.in_width}};

  auto source = [&](int ref, size_t idx) -> const Shape& {
    if (ref == kFromModelInput) return input;
    if (ref == kFromPrevious) return idx == 0 ? input : shapes[idx - 1];
    return shapes[static_cast<size_t>(ref)];
  };

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDef& L = spec.layers[i];
    const Shape& in = source(L.input, i);
    LayerCost cost;
    cost.name = "layer" + std::to_string(i) + "." + layer_kind_name(L.kind);

    switch (L.kind) {
      case LayerKind::kConv2d: {
        if (!in.spatial()) fail_layer(i, L.kind, "needs a (c,h,w) input");
        if (in.dims[0] != L.in_ch)
          fail_layer(i, L.kind, "expects " + std::to_string(L.in_ch) + " channels, got " +
                                    std::to_string(in.dims[0]));
        if (in.dims[1] + 2 * L.pad < L.kernel || in.dims[2] + 2 * L.pad < L.kernel)
          fail_layer(i, L.kind, "kernel does not fit the padded input");
        const int ho = conv_out(in.dims[1], L.kernel, L.stride, L.pad);
        const int wo = conv_out(in.dims[2], L.kernel, L.stride, L.pad);
        shapes[i] = {{L.out_ch, ho, wo}};
        const int64_t kk = static_cast<int64_t>(L.kernel) * L.kernel;
        cost.params = static_cast<int64_t>(L.out_ch) * L.in_ch * kk + (L.bias ? L.out_ch : 0);
        cost.macs = static_cast<int64_t>(L.out_ch) * L.in_ch * kk * ho * wo;
        break;
      }
      case LayerKind::kConvTranspose2d: {
        if (!in.spatial()) fail_layer(i, L.kind, "needs a (c,h,w) input");
        if (in.dims[0] != L.in_ch)
          fail_layer(i, L.kind, "expects " + std::to_string(L.in_ch) + " channels, got " +
                                    std::to_string(in.dims[0]));
        const int ho = (in.dims[1] - 1) * L.stride - 2 * L.pad + L.kernel + L.outpad;
        const int wo = (in.dims[2] - 1) * L.stride - 2 * L.pad + L.kernel + L.outpad;
        if (ho < 1 || wo < 1) fail_layer(i, L.kind, "output extent is not positive");
        shapes[i] = {{L.out_ch, ho, wo}};
        const int64_t kk = static_cast<int64_t>(L.kernel) * L.kernel;
        cost.params = static_cast<int64_t>(L.in_ch) * L.out_ch * kk + (L.bias ? L.out_ch : 0);
        cost.macs = static_cast<int64_t>(L.out_ch) * L.in_ch * kk * ho * wo;
        break;
      }
      case LayerKind::kLinear: {
        if (in.spatial()) fail_layer(i, L.kind, "needs a flattened input");
        if (in.dims[0] != L.in_ch)
          fail_layer(i, L.kind, "expects " + std::to_string(L.in_ch) + " features, got " +
                                    std::to_string(in.dims[0]));
        shapes[i] = {{L.out_ch}};
        cost.params = static_cast<int64_t>(L.in_ch) * L.out_ch + (L.bias ? L.out_ch : 0);
        cost.macs = static_cast<int64_t>(L.in_ch) * L.out_ch;
        break;
      }
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d: {
        if (!in.spatial()) fail_layer(i, L.kind, "needs a (c,h,w) input");
        if (in.dims[1] + 2 * L.pad < L.kernel || in.dims[2] + 2 * L.pad < L.kernel)
          fail_layer(i, L.kind, "window exceeds the padded input");
        shapes[i] = {{in.dims[0], conv_out(in.dims[1], L.kernel, L.stride, L.pad),
                      conv_out(in.dims[2], L.kernel, L.stride, L.pad)}};
        break;
      }
      case LayerKind::kBatchNorm2d: {
        if (!in.spatial()) fail_layer(i, L.kind, "needs a (c,h,w) input");
        if (in.dims[0] != L.channels)
          fail_layer(i, L.kind, "expects " + std::to_string(L.channels) + " channels, got " +
                                    std::to_string(in.dims[0]));
        shapes[i] = in;
        cost.params = 2LL * L.channels;
        break;
      }
      case LayerKind::kFlatten: {
        int64_t flat = 1;
        for (int e : in.dims) flat *= e;
        shapes[i] = {{static_cast<int>(flat)}};
        break;
      }
      case LayerKind::kAdd: {
        const Shape& rhs = source(L.rhs, i);
        if (in.dims != rhs.dims) fail_layer(i, L.kind, "operand shapes differ");
        shapes[i] = in;
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kSigmoid:
        shapes[i] = in;
        break;
    }

    cost.flops = 2 * cost.macs;
    cost.memory_bytes = cost.params * 4;
    report.flops += cost.flops;
    report.macs += cost.macs;
    report.params += cost.params;
    report.memory_bytes += cost.memory_bytes;
    report.layers.push_back(std::move(cost));
  }
  return report;
}

ResourceReport profile_at(ModelSpec spec, int channels, int h, int w) {
  spec.in_channels = channels;
  spec.in_height = h;
  spec.in_width = w;
  return profile(spec);
}

std::string format_report(const ResourceReport& report) {
  size_t name_w = 5;
  for (const auto& l : report.layers) name_w = std::max(name_w, l.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::right
     << std::setw(14) << "flops" << std::setw(14) << "macs" << std::setw(12) << "params"
     << std::setw(14) << "memory_bytes" << "\n";
  auto row = [&](const std::string& name, int64_t f, int64_t m, int64_t p, int64_t b) {
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << name << std::right
       << std::setw(14) << f << std::setw(14) << m << std::setw(12) << p << std::setw(14) << b
       << "\n";
  };
  for (const auto& l : report.layers) row(l.name, l.flops, l.macs, l.params, l.memory_bytes);
  row("total", report.flops, report.macs, report.params, report.memory_bytes);
  return os.str();
}

std::string report_csv(const ResourceReport& report) {
  std::ostringstream os;
  os << "layer,flops,macs,params,memory_bytes\n";
  for (const auto& l : report.layers)
    os << l.name << "," << l.flops << "," << l.macs << "," << l.params << ","
       << l.memory_bytes << "\n";
  os << "total," << report.flops << "," << report.macs << "," << report.params << ","
     << report.memory_bytes << "\n";
  return os.str();
}

std::string compare_reports(const ResourceReport& a, const ResourceReport& b) {
  struct Metric {
    const char* name;
    int64_t num;
    int64_t den;
  };
  const Metric metrics[] = {{"flops", a.flops, b.flops},
                            {"macs", a.macs, b.macs},
                            {"params", a.params, b.params},
                            {"memory_bytes", a.memory_bytes, b.memory_bytes}};
  std::ostringstream os;
  for (const Metric& m : metrics) {
    if (m.den == 0)
      throw std::invalid_argument(std::string("compare: denominator ") + m.name + " is zero");
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", static_cast<double>(m.num) / m.den);
    os << m.name << ": " << buf << "x\n";
  }
  return os.str();
}

}  // namespace reffakd
