#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "reffakd/model.hpp"
#include "reffakd/model_zoo.hpp"
#include "reffakd/profiler.hpp"
#include "reffakd/rng.hpp"
#include "support.hpp"

using namespace reffakd;
using testutil::TempDir;
using testutil::slurp;
using testutil::spew;

namespace {

bool same_parameters(Model& a, Model& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->shape != pb[i]->shape) return false;
    if (std::memcmp(pa[i]->data.data(), pb[i]->data.data(),
                    pa[i]->data.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("spec text round-trips exactly") {
  for (const auto& spec : {build_cae(3, 32, 32), build_lenet5(10, 1, 28, 28),
                           build_resnet(18, 100, 3, 32, 32)}) {
    const std::string text = serialize_model_spec(spec);
    ModelSpec parsed = parse_model_spec(text);
    CHECK(parsed == spec);
    CHECK(serialize_model_spec(parsed) == text);
  }
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_model_spec("name x\ninput 1 8 8\nconv2d bogus_key=3\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_model_spec("name x\ninput 1 8 8\nwarp in=1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_model_spec("input 1 8 8\nrelu\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_model_spec(""), std::invalid_argument);
}

TEST_CASE("parser accepts comments and blank lines") {
  ModelSpec spec = parse_model_spec(
      "# a classifier\nname tiny\n\ninput 1 8 8\nconv2d in=1 out=2 kernel=3 pad=1\n"
      "relu  # activation\nflatten\nlinear in=128 out=4\n");
  CHECK(spec.name == "tiny");
  CHECK(spec.layers.size() == 4);
  CHECK(spec.layers[0].kind == LayerKind::kConv2d);
}

TEST_CASE("validation names the offending layer") {
  ModelSpec spec = build_lenet5(10, 1, 28, 28);
  spec.layers[2].input = 99;
  try {
    validate_model_spec(spec);
    FAIL("expected a wiring error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }

  ModelSpec dup = build_cae(3, 32, 32);
  for (auto& l : dup.layers)
    if (!l.tap.empty()) {
      dup.layers[0].tap = l.tap;
      break;
    }
  CHECK_THROWS_AS(validate_model_spec(dup), std::invalid_argument);
}

TEST_CASE("construction is deterministic in the seed") {
  ModelSpec spec = build_lenet5(10, 1, 28, 28);
  Model a(spec, 7), b(spec, 7), c(spec, 8);
  CHECK(same_parameters(a, b));
  CHECK_FALSE(same_parameters(a, c));
}

TEST_CASE("checkpoint round-trips bitwise, running buffers included") {
  TempDir tmp("ckpt");
  ModelSpec spec = build_resnet(18, 10, 3, 32, 32);
  Model m(spec, 3);
  // Push one training batch through so batch-norm running buffers move off
  // their init values before saving.
  auto x = make_tensor({2, 3, 32, 32}, 0.0);
  Rng rng(5);
  for (auto& v : x->data) v = rng.uniform(0.0, 1.0);
  TensorPtr before;
  {
    NoGradGuard g;
    m.forward(x, true);
    before = m.forward(x, false);
  }
  const std::string path = tmp.file("model.ckpt");
  m.save_checkpoint(path);

  Model fresh(spec, 99);
  CHECK_FALSE(same_parameters(m, fresh));
  fresh.load_checkpoint(path);
  CHECK(same_parameters(m, fresh));
  TensorPtr after;
  {
    NoGradGuard g;
    after = fresh.forward(x, false);
  }
  CHECK(std::memcmp(before->data.data(), after->data.data(),
                    before->data.size() * sizeof(double)) == 0);
}

TEST_CASE("checkpoint loader rejects corruption") {
  TempDir tmp("ckpt_bad");
  ModelSpec spec = build_lenet5(10, 1, 28, 28);
  Model m(spec, 1);
  const std::string path = tmp.file("good.ckpt");
  m.save_checkpoint(path);
  const std::string bytes = slurp(path);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  spew(tmp.file("bad_magic.ckpt"), bad_magic);
  CHECK_THROWS_AS(m.load_checkpoint(tmp.file("bad_magic.ckpt")), std::runtime_error);

  spew(tmp.file("trunc.ckpt"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(m.load_checkpoint(tmp.file("trunc.ckpt")), std::runtime_error);

  spew(tmp.file("extra.ckpt"), bytes + std::string(8, '\0'));
  CHECK_THROWS_AS(m.load_checkpoint(tmp.file("extra.ckpt")), std::runtime_error);

  Model other(build_cae(1, 28, 28), 1);
  CHECK_THROWS_AS(other.load_checkpoint(path), std::runtime_error);

  CHECK_THROWS_AS(m.load_checkpoint(tmp.file("missing.ckpt")), std::runtime_error);
}

TEST_CASE("named parameters carry layer-qualified names") {
  Model m(build_lenet5(10, 1, 28, 28), 1);
  auto named = m.named_parameters();
  CHECK(named.size() == m.parameters().size());
  for (const auto& [name, t] : named) {
    CHECK_FALSE(name.empty());
    CHECK(t != nullptr);
  }
  CHECK(named[0].first == "layer0.weight");
  CHECK(named[1].first == "layer0.bias");
}

TEST_CASE("zero input reaches the classifier head as its bias") {
  Model m(build_lenet5(10, 1, 28, 28), 4);
  auto x = make_tensor({2, 1, 28, 28}, 0.0);
  NoGradGuard g;
  auto logits = m.forward(x, false);
  CHECK(logits->shape == std::vector<int>{2, 10});
  auto named = m.named_parameters();
  const auto& final_bias = named.back().second;
  REQUIRE(final_bias->shape == std::vector<int>{10});
  for (int n = 0; n < 2; ++n)
    for (int j = 0; j < 10; ++j)
      CHECK(logits->data[static_cast<size_t>(n) * 10 + static_cast<size_t>(j)] ==
            final_bias->data[static_cast<size_t>(j)]);
}

TEST_CASE("forward rejects mismatched input shapes") {
  Model m(build_lenet5(10, 1, 28, 28), 1);
  auto bad = make_tensor({1, 3, 28, 28}, 0.0);
  NoGradGuard g;
  CHECK_THROWS_AS(m.forward(bad, false), std::invalid_argument);
}

}  // TEST_SUITE("model")

TEST_SUITE("zoo") {

TEST_CASE("cae bottleneck dimension follows the downsampling arithmetic") {
  CHECK(cae_bottleneck_dim(32, 32) == 768);
  CHECK(cae_bottleneck_dim(64, 64) == 3072);
  CHECK(cae_bottleneck_dim(8, 8) == 48);
  CHECK(cae_bottleneck_dim(28, 28) == 432);
}

TEST_CASE("cae reconstructs the input shape and exposes the bottleneck tap") {
  for (int hw : {8, 28, 32, 64}) {
    ModelSpec spec = build_cae(hw == 28 ? 1 : 3, hw, hw);
    Model m(spec, 1);
    CHECK(m.has_tap("bottleneck"));
    auto x = make_tensor({2, spec.in_channels, hw, hw}, 0.5);
    NoGradGuard g;
    auto y = m.forward(x, false);
    CHECK(y->shape == x->shape);
    for (double v : y->data) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);  // sigmoid output
    }
    auto z = m.forward_tap(x, "bottleneck", false);
    CHECK(z->numel() == 2 * cae_bottleneck_dim(hw, hw));
  }
  CHECK_THROWS_AS(build_cae(3, 7, 7), std::invalid_argument);
}

TEST_CASE("lenet5 structure") {
  ModelSpec spec = build_lenet5(10, 1, 28, 28);
  Model m(spec, 1);
  CHECK(m.parameter_count() == 51902);
  auto x = make_tensor({3, 1, 28, 28}, 0.2);
  NoGradGuard g;
  auto y = m.forward(x, false);
  CHECK(y->shape == std::vector<int>{3, 10});
  // 16 channels at 5x5 after the second pool feed the first linear layer.
  bool saw_400 = false;
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::kLinear && l.in_ch == 400) saw_400 = true;
  CHECK(saw_400);
  CHECK_THROWS_AS(build_lenet5(10, 1, 27, 27), std::invalid_argument);
}

TEST_CASE("resnets build, run and match the published parameter scale") {
  ModelSpec r18 = build_resnet(18, 100, 3, 32, 32);
  Model m18(r18, 1);
  auto x = make_tensor({2, 3, 32, 32}, 0.1);
  NoGradGuard g;
  auto y = m18.forward(x, false);
  CHECK(y->shape == std::vector<int>{2, 100});

  ModelSpec r50 = build_resnet(50, 100, 3, 32, 32);
  Model m50(r50, 1);
  const double params = static_cast<double>(m50.parameter_count());
  CHECK(params > 23.7e6 * 0.98);
  CHECK(params < 23.7e6 * 1.02);

  CHECK_THROWS_AS(build_resnet(34, 10, 3, 32, 32), std::invalid_argument);
}

TEST_CASE("large-input resnet uses the strided stem") {
  ModelSpec small = build_resnet(18, 10, 3, 32, 32);
  ModelSpec big = build_resnet(18, 10, 3, 64, 64);
  CHECK(small.layers[0].kernel == 3);
  CHECK(small.layers[0].stride == 1);
  CHECK(big.layers[0].kernel == 7);
  CHECK(big.layers[0].stride == 2);
  bool has_pool = false;
  for (size_t i = 0; i < 6 && i < big.layers.size(); ++i)
    if (big.layers[i].kind == LayerKind::kMaxPool2d) has_pool = true;
  CHECK(has_pool);
  Model m(big, 1);
  auto x = make_tensor({1, 3, 64, 64}, 0.1);
  NoGradGuard g;
  CHECK(m.forward(x, false)->shape == std::vector<int>{1, 10});
}

TEST_CASE("model parameter counts agree with the profiler") {
  for (const auto& spec :
       {build_cae(3, 32, 32), build_lenet5(10, 1, 28, 28), build_resnet(18, 100, 3, 32, 32),
        build_resnet(50, 100, 3, 32, 32)}) {
    Model m(spec, 1);
    CHECK(m.parameter_count() == profile(spec).params);
  }
}

TEST_CASE("named dispatch") {
  CHECK(build_named_model("cae", 0, 3, 32, 32) == build_cae(3, 32, 32));
  CHECK(build_named_model("lenet5", 10, 1, 28, 28) == build_lenet5(10, 1, 28, 28));
  CHECK(build_named_model("resnet18", 100, 3, 32, 32) == build_resnet(18, 100, 3, 32, 32));
  CHECK(build_named_model("resnet50", 100, 3, 32, 32) == build_resnet(50, 100, 3, 32, 32));
  CHECK_THROWS_AS(build_named_model("vgg16", 10, 3, 32, 32), std::invalid_argument);
}

}  // TEST_SUITE("zoo")
