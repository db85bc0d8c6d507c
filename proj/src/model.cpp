#include "reffakd/model.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "reffakd/kernels.hpp"
#include "reffakd/ops.hpp"
#include "reffakd/rng.hpp"

namespace reffakd {

namespace {

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'R', 'K', 'D', 'T'};

struct KindInfo {
  LayerKind kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {LayerKind::kConv2d, "conv2d"},
    {LayerKind::kConvTranspose2d, "convtranspose2d"},
    {LayerKind::kLinear, "linear"},
    {LayerKind::kReLU, "relu"},
    {LayerKind::kSigmoid, "sigmoid"},
    {LayerKind::kMaxPool2d, "maxpool2d"},
    {LayerKind::kAvgPool2d, "avgpool2d"},
    {LayerKind::kBatchNorm2d, "batchnorm2d"},
    {LayerKind::kFlatten, "flatten"},
    {LayerKind::kAdd, "add"},
};

std::string layer_label(size_t idx, LayerKind kind) {
  return "layer " + std::to_string(idx) + " (" + layer_kind_name(kind) + ")";
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

bool has_param_tensor(LayerKind k) {
  return k == LayerKind::kConv2d || k == LayerKind::kConvTranspose2d || k == LayerKind::kLinear;
}

int parse_int(const std::string& s, const std::string& where) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    fail(where + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) fail(where + ": not an integer: '" + s + "'");
  if (v < -1000000000LL || v > 1000000000LL) fail(where + ": value out of range: '" + s + "'");
  return static_cast<int>(v);
}

/// Per-sample shape propagation; mirrors the runtime op arithmetic so a bad
/// spec fails at construction with the layer named.
std::vector<std::vector<int>> propagate_shapes(const ModelSpec& spec) {
  std::vector<std::vector<int>> out(spec.layers.size());
  const std::vector<int> in_shape = {spec.in_channels, spec.in_height, spec.in_width};
  auto source = [&](int ref, size_t idx) -> const std::vector<int>& {
    if (ref == kFromModelInput) return in_shape;
    if (ref == kFromPrevious) return idx == 0 ? in_shape : out[idx - 1];
    return out[static_cast<size_t>(ref)];
  };
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDef& L = spec.layers[i];
    const std::vector<int>& in = source(L.input, i);
    const std::string who = layer_label(i, L.kind);
    auto need_rank3 = [&]() {
      if (in.size() != 3) fail(who + ": needs a (c,h,w) input, got rank " +
                               std::to_string(in.size()));
    };
    switch (L.kind) {
      case LayerKind::kConv2d: {
        need_rank3();
        if (in[0] != L.in_ch)
          fail(who + ": expects " + std::to_string(L.in_ch) + " channels, got " +
               std::to_string(in[0]));
        try {
          const auto d =
              kern::conv2d_dims(1, L.in_ch, in[1], in[2], L.out_ch, L.kernel, L.stride, L.pad);
          out[i] = {d.cout, d.hout, d.wout};
        } catch (const std::invalid_argument& e) {
          fail(who + ": " + e.what());
        }
        break;
      }
      case LayerKind::kConvTranspose2d: {
        need_rank3();
        if (in[0] != L.in_ch)
          fail(who + ": expects " + std::to_string(L.in_ch) + " channels, got " +
               std::to_string(in[0]));
        try {
          const auto d = kern::conv_transpose2d_dims(1, L.in_ch, in[1], in[2], L.out_ch, L.kernel,
                                                     L.stride, L.pad, L.outpad);
          out[i] = {d.cout, d.hout, d.wout};
        } catch (const std::invalid_argument& e) {
          fail(who + ": " + e.what());
        }
        break;
      }
      case LayerKind::kLinear: {
        if (in.size() != 1)
          fail(who + ": needs a flattened input, got rank " + std::to_string(in.size()));
        if (in[0] != L.in_ch)
          fail(who + ": expects " + std::to_string(L.in_ch) + " features, got " +
               std::to_string(in[0]));
        out[i] = {L.out_ch};
        break;
      }
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d: {
        need_rank3();
        const int h = in[1], w = in[2];
        if (h + 2 * L.pad < L.kernel || w + 2 * L.pad < L.kernel)
          fail(who + ": window " + std::to_string(L.kernel) + " exceeds padded input " +
               std::to_string(h) + "x" + std::to_string(w));
        out[i] = {in[0], (h + 2 * L.pad - L.kernel) / L.stride + 1,
                  (w + 2 * L.pad - L.kernel) / L.stride + 1};
        break;
      }
      case LayerKind::kBatchNorm2d: {
        need_rank3();
        if (in[0] != L.channels)
          fail(who + ": expects " + std::to_string(L.channels) + " channels, got " +
               std::to_string(in[0]));
        out[i] = in;
        break;
      }
      case LayerKind::kFlatten: {
        int64_t flat = 1;
        for (int e : in) flat *= e;
        out[i] = {static_cast<int>(flat)};
        break;
      }
      case LayerKind::kAdd: {
        const std::vector<int>& rhs = source(L.rhs, i);
        if (in != rhs) {
          auto str = [](const std::vector<int>& v) {
            std::string s = "(";
            for (size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
            return s + ")";
          };
          fail(who + ": operand shapes differ: " + str(in) + " vs " + str(rhs));
        }
        out[i] = in;
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kSigmoid:
        out[i] = in;
        break;
    }
  }
  return out;
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<uint64_t>(d)); }

[[noreturn]] void truncated() { throw std::runtime_error("checkpoint truncated"); }

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) truncated();
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) truncated();
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "?";
}

void validate_model_spec(const ModelSpec& spec) {
  if (spec.name.empty()) fail("model spec: empty name");
  if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1)
    fail("model spec: input extents must be positive");
  if (spec.layers.empty()) fail("model spec: no layers");
  std::set<std::string> taps;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDef& L = spec.layers[i];
    const std::string who = layer_label(i, L.kind);
    auto check_ref = [&](int ref, const char* what, bool allow_previous) {
      if (ref == kFromModelInput) return;
      if (ref == kFromPrevious && allow_previous) return;
      if (ref >= 0 && static_cast<size_t>(ref) < i) return;
      fail(who + ": " + what + " reference " + std::to_string(ref) + " is not an earlier layer");
    };
    check_ref(L.input, "input", true);
    if (L.kind == LayerKind::kAdd) {
      check_ref(L.rhs, "rhs", false);
    } else if (L.rhs != kNoInput) {
      fail(who + ": rhs only applies to add");
    }
    switch (L.kind) {
      case LayerKind::kConv2d:
      case LayerKind::kConvTranspose2d:
        if (L.in_ch < 1 || L.out_ch < 1) fail(who + ": channel counts must be >= 1");
        if (L.kernel < 1 || L.stride < 1) fail(who + ": kernel and stride must be >= 1");
        if (L.pad < 0) fail(who + ": pad must be >= 0");
        if (L.kind == LayerKind::kConvTranspose2d) {
          if (L.outpad < 0 || L.outpad >= L.stride) fail(who + ": outpad must be in [0, stride)");
        } else if (L.outpad != 0) {
          fail(who + ": outpad only applies to convtranspose2d");
        }
        break;
      case LayerKind::kLinear:
        if (L.in_ch < 1 || L.out_ch < 1) fail(who + ": feature counts must be >= 1");
        break;
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d:
        if (L.kernel < 1 || L.stride < 1) fail(who + ": kernel and stride must be >= 1");
        if (L.pad < 0 || 2 * L.pad > L.kernel)
          fail(who + ": pad must satisfy 0 <= 2*pad <= kernel");
        break;
      case LayerKind::kBatchNorm2d:
        if (L.channels < 1) fail(who + ": channels must be >= 1");
        break;
      case LayerKind::kReLU:
      case LayerKind::kSigmoid:
      case LayerKind::kFlatten:
      case LayerKind::kAdd:
        break;
    }
    if (!L.tap.empty() && !taps.insert(L.tap).second) fail(who + ": duplicate tap '" + L.tap + "'");
  }
}

std::string serialize_model_spec(const ModelSpec& spec) {
  std::ostringstream os;
  os << "name " << spec.name << "\n";
  os << "input " << spec.in_channels << " " << spec.in_height << " " << spec.in_width << "\n";
  for (const LayerDef& L : spec.layers) {
    os << layer_kind_name(L.kind);
    switch (L.kind) {
      case LayerKind::kConv2d:
        os << " in=" << L.in_ch << " out=" << L.out_ch << " kernel=" << L.kernel
           << " stride=" << L.stride << " pad=" << L.pad << " bias=" << (L.bias ? 1 : 0);
        break;
      case LayerKind::kConvTranspose2d:
        os << " in=" << L.in_ch << " out=" << L.out_ch << " kernel=" << L.kernel
           << " stride=" << L.stride << " pad=" << L.pad << " outpad=" << L.outpad
           << " bias=" << (L.bias ? 1 : 0);
        break;
      case LayerKind::kLinear:
        os << " in=" << L.in_ch << " out=" << L.out_ch << " bias=" << (L.bias ? 1 : 0);
        break;
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d:
        os << " kernel=" << L.kernel << " stride=" << L.stride << " pad=" << L.pad;
        break;
      case LayerKind::kBatchNorm2d:
        os << " channels=" << L.channels;
        break;
      case LayerKind::kAdd:
        os << " rhs=" << L.rhs;
        break;
      case LayerKind::kReLU:
      case LayerKind::kSigmoid:
      case LayerKind::kFlatten:
        break;
    }
    if (L.input != kFromPrevious) os << " from=" << L.input;
    if (!L.tap.empty()) os << " tap=" << L.tap;
    os << "\n";
  }
  return os.str();
}

ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec spec;
  bool saw_name = false;
  bool saw_input = false;
  std::istringstream lines(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(lines, raw)) {
    ++lineno;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    std::istringstream toks(raw);
    std::vector<std::string> tok;
    std::string t;
    while (toks >> t) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = "model spec line " + std::to_string(lineno);

    if (tok[0] == "name") {
      if (saw_name) fail(where + ": duplicate name line");
      if (saw_input || !spec.layers.empty()) fail(where + ": name must come first");
      if (tok.size() != 2) fail(where + ": expected 'name <id>'");
      spec.name = tok[1];
      saw_name = true;
      continue;
    }
    if (tok[0] == "input") {
      if (saw_input) fail(where + ": duplicate input line");
      if (!spec.layers.empty()) fail(where + ": input must precede layers");
      if (tok.size() != 4) fail(where + ": expected 'input <c> <h> <w>'");
      spec.in_channels = parse_int(tok[1], where);
      spec.in_height = parse_int(tok[2], where);
      spec.in_width = parse_int(tok[3], where);
      saw_input = true;
      continue;
    }

    const KindInfo* info = nullptr;
    for (const auto& k : kKinds)
      if (tok[0] == k.name) info = &k;
    if (!info) fail(where + ": unknown layer kind '" + tok[0] + "'");
    if (!saw_input) fail(where + ": input line must precede layers");

    LayerDef L;
    L.kind = info->kind;
    bool saw_stride = false;
    for (size_t i = 1; i < tok.size(); ++i) {
      const size_t eq = tok[i].find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 >= tok[i].size())
        fail(where + ": expected key=value, got '" + tok[i] + "'");
      const std::string key = tok[i].substr(0, eq);
      const std::string val = tok[i].substr(eq + 1);
      const bool convlike =
          L.kind == LayerKind::kConv2d || L.kind == LayerKind::kConvTranspose2d;
      const bool poollike = L.kind == LayerKind::kMaxPool2d || L.kind == LayerKind::kAvgPool2d;
      if (key == "in" && (convlike || L.kind == LayerKind::kLinear)) {
        L.in_ch = parse_int(val, where);
      } else if (key == "out" && (convlike || L.kind == LayerKind::kLinear)) {
        L.out_ch = parse_int(val, where);
      } else if (key == "kernel" && (convlike || poollike)) {
        L.kernel = parse_int(val, where);
      } else if (key == "stride" && (convlike || poollike)) {
        L.stride = parse_int(val, where);
        saw_stride = true;
      } else if (key == "pad" && (convlike || poollike)) {
        L.pad = parse_int(val, where);
      } else if (key == "outpad" && L.kind == LayerKind::kConvTranspose2d) {
        L.outpad = parse_int(val, where);
      } else if (key == "bias" && (convlike || L.kind == LayerKind::kLinear)) {
        const int b = parse_int(val, where);
        if (b != 0 && b != 1) fail(where + ": bias must be 0 or 1");
        L.bias = b == 1;
      } else if (key == "channels" && L.kind == LayerKind::kBatchNorm2d) {
        L.channels = parse_int(val, where);
      } else if (key == "rhs" && L.kind == LayerKind::kAdd) {
        L.rhs = parse_int(val, where);
      } else if (key == "from") {
        L.input = parse_int(val, where);
      } else if (key == "tap") {
        L.tap = val;
      } else {
        fail(where + " (" + tok[0] + "): unknown key '" + key + "'");
      }
    }
    // Pooling stride defaults to the window size, the usual convention.
    if ((L.kind == LayerKind::kMaxPool2d || L.kind == LayerKind::kAvgPool2d) && !saw_stride)
      L.stride = L.kernel;
    if (L.kind == LayerKind::kAdd && L.rhs == kNoInput) fail(where + ": add requires rhs=");
    spec.layers.push_back(L);
  }
  if (!saw_name) fail("model spec: missing name line");
  if (!saw_input) fail("model spec: missing input line");
  validate_model_spec(spec);
  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model spec: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_spec(buf.str());
}

void save_model_spec(const ModelSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model spec: " + path);
  out << serialize_model_spec(spec);
  if (!out) throw std::runtime_error("failed writing model spec: " + path);
}

Model::Model(ModelSpec spec, uint64_t seed) : spec_(std::move(spec)) {
  validate_model_spec(spec_);
  propagate_shapes(spec_);  // fail early on incompatible chains
  Rng rng(seed);
  states_.resize(spec_.layers.size());
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDef& L = spec_.layers[i];
    LayerState& st = states_[i];
    if (has_param_tensor(L.kind)) {
      std::vector<int> wshape;
      int fan_in = 0;
      if (L.kind == LayerKind::kConv2d) {
        wshape = {L.out_ch, L.in_ch, L.kernel, L.kernel};
        fan_in = L.in_ch * L.kernel * L.kernel;
      } else if (L.kind == LayerKind::kConvTranspose2d) {
        wshape = {L.in_ch, L.out_ch, L.kernel, L.kernel};
        fan_in = L.out_ch * L.kernel * L.kernel;
      } else {
        wshape = {L.out_ch, L.in_ch};
        fan_in = L.in_ch;
      }
      std::vector<double> w(static_cast<size_t>(shape_numel(wshape)));
      const double stddev = std::sqrt(2.0 / fan_in);
      for (double& v : w) v = rng.normal() * stddev;
      st.weight = make_param(wshape, std::move(w));
      if (L.bias) st.bias = make_param({L.out_ch}, std::vector<double>(L.out_ch, 0.0));
    } else if (L.kind == LayerKind::kBatchNorm2d) {
      st.gamma = make_param({L.channels}, std::vector<double>(L.channels, 1.0));
      st.beta = make_param({L.channels}, std::vector<double>(L.channels, 0.0));
      st.running_mean.assign(static_cast<size_t>(L.channels), 0.0);
      st.running_var.assign(static_cast<size_t>(L.channels), 1.0);
    }
  }
}

TensorPtr Model::run(const TensorPtr& x, int until_layer, bool training) {
  if (!x) fail("model forward: null input");
  if (x->rank() != 4 || x->dim(1) != spec_.in_channels || x->dim(2) != spec_.in_height ||
      x->dim(3) != spec_.in_width)
    fail("model forward: input must be [batch," + std::to_string(spec_.in_channels) + "," +
         std::to_string(spec_.in_height) + "," + std::to_string(spec_.in_width) + "], got " +
         shape_str(x->shape));
  const size_t last =
      until_layer < 0 ? spec_.layers.size() - 1 : static_cast<size_t>(until_layer);
  std::vector<TensorPtr> outs(last + 1);
  auto source = [&](int ref, size_t idx) -> const TensorPtr& {
    if (ref == kFromModelInput) return x;
    if (ref == kFromPrevious) return idx == 0 ? x : outs[idx - 1];
    return outs[static_cast<size_t>(ref)];
  };
  for (size_t i = 0; i <= last; ++i) {
    const LayerDef& L = spec_.layers[i];
    LayerState& st = states_[i];
    const TensorPtr& src = source(L.input, i);
    try {
      switch (L.kind) {
        case LayerKind::kConv2d:
          outs[i] = ops::conv2d(src, st.weight, st.bias, L.stride, L.pad);
          break;
        case LayerKind::kConvTranspose2d:
          outs[i] = ops::conv_transpose2d(src, st.weight, st.bias, L.stride, L.pad, L.outpad);
          break;
        case LayerKind::kLinear:
          outs[i] = ops::linear(src, st.weight, st.bias);
          break;
        case LayerKind::kReLU:
          outs[i] = ops::relu(src);
          break;
        case LayerKind::kSigmoid:
          outs[i] = ops::sigmoid(src);
          break;
        case LayerKind::kMaxPool2d:
          outs[i] = ops::maxpool2d(src, L.kernel, L.stride, L.pad);
          break;
        case LayerKind::kAvgPool2d:
          outs[i] = ops::avgpool2d(src, L.kernel, L.stride, L.pad);
          break;
        case LayerKind::kBatchNorm2d:
          outs[i] = ops::batchnorm2d(src, st.gamma, st.beta, st.running_mean, st.running_var,
                                     training);
          break;
        case LayerKind::kFlatten:
          outs[i] = ops::flatten(src);
          break;
        case LayerKind::kAdd:
          outs[i] = ops::add(src, source(L.rhs, i));
          break;
      }
    } catch (const std::invalid_argument& e) {
      fail(layer_label(i, L.kind) + ": " + e.what());
    }
  }
  return outs[last];
}

TensorPtr Model::forward(const TensorPtr& x, bool training) { return run(x, -1, training); }

TensorPtr Model::forward_tap(const TensorPtr& x, const std::string& tap, bool training) {
  for (size_t i = 0; i < spec_.layers.size(); ++i)
    if (spec_.layers[i].tap == tap) return run(x, static_cast<int>(i), training);
  fail("model '" + spec_.name + "' has no tap named '" + tap + "'");
}

bool Model::has_tap(const std::string& tap) const {
  for (const LayerDef& L : spec_.layers)
    if (L.tap == tap) return true;
  return false;
}

std::vector<TensorPtr> Model::parameters() const {
  std::vector<TensorPtr> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, TensorPtr>> Model::named_parameters() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  for (size_t i = 0; i < states_.size(); ++i) {
    const std::string base = "layer" + std::to_string(i);
    const LayerState& st = states_[i];
    if (st.weight) out.emplace_back(base + ".weight", st.weight);
    if (st.bias) out.emplace_back(base + ".bias", st.bias);
    if (st.gamma) out.emplace_back(base + ".gamma", st.gamma);
    if (st.beta) out.emplace_back(base + ".beta", st.beta);
  }
  return out;
}

int64_t Model::parameter_count() const {
  int64_t total = 0;
  for (const auto& [name, t] : named_parameters()) total += t->numel();
  return total;
}

template <typename Self, typename Fn>
void Model::visit_records(Self& self, Fn&& fn) {
  for (size_t i = 0; i < self.states_.size(); ++i) {
    const std::string base = "layer" + std::to_string(i);
    auto& st = self.states_[i];
    if (st.weight) fn(base + ".weight", st.weight->shape, st.weight->data);
    if (st.bias) fn(base + ".bias", st.bias->shape, st.bias->data);
    if (st.gamma) fn(base + ".gamma", st.gamma->shape, st.gamma->data);
    if (st.beta) fn(base + ".beta", st.beta->shape, st.beta->data);
    if (!st.running_mean.empty()) {
      const std::vector<int> shape = {static_cast<int>(st.running_mean.size())};
      fn(base + ".running_mean", shape, st.running_mean);
      fn(base + ".running_var", shape, st.running_var);
    }
  }
}

void Model::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kCheckpointMagic, 4);
  put_u32(os, kCheckpointVersion);
  visit_records(*this, [&os](const std::string& name, const std::vector<int>& shape,
                             const std::vector<double>& data) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, shape.size());
    for (int e : shape) put_u64(os, static_cast<uint64_t>(e));
    for (double v : data) put_f64(os, v);
  });
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

void Model::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4)) truncated();
  if (std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> records;
  while (is.peek() != std::char_traits<char>::eof()) {
    const uint32_t name_len = get_u32(is);
    if (name_len == 0 || name_len > 4096) throw std::runtime_error("checkpoint record corrupt");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) truncated();
    const uint64_t rank = get_u64(is);
    if (rank > 8) throw std::runtime_error("checkpoint record corrupt");
    std::vector<int> shape(rank);
    uint64_t count = 1;
    for (uint64_t r = 0; r < rank; ++r) {
      const uint64_t e = get_u64(is);
      if (e == 0 || e > (1u << 30)) throw std::runtime_error("checkpoint record corrupt");
      shape[r] = static_cast<int>(e);
      count *= e;
    }
    std::vector<double> data(count);
    for (uint64_t k = 0; k < count; ++k) data[k] = get_f64(is);
    if (!records.emplace(name, std::make_pair(std::move(shape), std::move(data))).second)
      throw std::runtime_error("checkpoint has duplicate record '" + name + "'");
  }

  visit_records(*this, [&records, &path](const std::string& name, const std::vector<int>& shape,
                                         std::vector<double>& data) {
    auto it = records.find(name);
    if (it == records.end())
      throw std::runtime_error("checkpoint " + path + " is missing record '" + name + "'");
    if (it->second.first != shape)
      throw std::runtime_error("checkpoint record '" + name + "' has the wrong shape");
    data = std::move(it->second.second);
    records.erase(it);
  });
  if (!records.empty())
    throw std::runtime_error("checkpoint has unexpected record '" + records.begin()->first + "'");
}

}  // namespace reffakd
