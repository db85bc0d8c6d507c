#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "reffakd/model_zoo.hpp"
#include "reffakd/ops.hpp"
#include "reffakd/rng.hpp"
#include "reffakd/synth.hpp"
#include "reffakd/train.hpp"
#include "support.hpp"

using namespace reffakd;
using testutil::TempDir;
using testutil::fill_uniform;
using testutil::gradcheck;
using testutil::slurp;

namespace {

TrainConfig tiny_config(TrainMode mode, int epochs, uint64_t seed) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.decay_epochs = {};
  cfg.seed = seed;
  cfg.augment.enabled = false;
  return cfg;
}

SoftLabelTable near_one_hot_table(int c, double off) {
  SoftLabelTable t;
  t.c = c;
  t.rows.assign(static_cast<size_t>(c) * c, off);
  for (int i = 0; i < c; ++i)
    t.rows[static_cast<size_t>(i) * c + i] = 1.0 - off * (c - 1);
  return t;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("mode names round-trip") {
  for (auto mode : {TrainMode::kCae, TrainMode::kBaseline, TrainMode::kVanillaKd,
                    TrainMode::kReffakd})
    CHECK(parse_train_mode(train_mode_name(mode)) == mode);
  CHECK_THROWS_AS(parse_train_mode("adam"), std::invalid_argument);
}

TEST_CASE("config validation") {
  TrainConfig cfg = tiny_config(TrainMode::kBaseline, 1, 0);
  validate_train_config(cfg);
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg.temperature = 5.0;
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg.alpha = 0.8;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
  cfg.batch_size = 16;
  cfg.lr = -0.1;
  CHECK_THROWS_AS(validate_train_config(cfg), std::invalid_argument);
}

TEST_CASE("reffakd loss with alpha 0 is plain cross entropy") {
  Rng rng(41);
  auto logits = make_tensor({4, 5}, 0.0);
  fill_uniform(logits, rng, -2.0, 2.0);
  auto table = near_one_hot_table(5, 0.05);
  auto soft = make_tensor({4, 5}, 0.0);
  std::vector<int> labels{0, 3, 2, 4};
  for (int b = 0; b < 4; ++b)
    for (int j = 0; j < 5; ++j)
      soft->data[static_cast<size_t>(b) * 5 + static_cast<size_t>(j)] =
          table.at(labels[static_cast<size_t>(b)], j);
  const double full = reffakd_loss(logits, soft, labels, 4.0, 0.0)->scalar();
  const double ce = ops::cross_entropy_loss(logits, labels)->scalar();
  CHECK(full == doctest::Approx(ce).epsilon(1e-12));
}

TEST_CASE("reffakd loss vanishes when the student matches the targets") {
  auto soft = make_tensor({2, 3}, std::vector<double>{0.5, 0.3, 0.2, 0.2, 0.5, 0.3});
  auto logits = make_tensor({2, 3}, 0.0);
  for (size_t i = 0; i < 6; ++i) logits->data[i] = std::log(soft->data[i]);
  const double v = reffakd_loss(logits, soft, {0, 1}, 1.0, 1.0)->scalar();
  CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reffakd loss closed form") {
  auto logits = make_tensor({1, 2}, std::vector<double>{0.0, 0.0});
  auto soft = make_tensor({1, 2}, std::vector<double>{0.75, 0.25});
  const double v = reffakd_loss(logits, soft, {0}, 1.0, 0.5)->scalar();
  const double kl = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(v == doctest::Approx(0.5 * kl + 0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.411980).epsilon(1e-5));
}

TEST_CASE("kd losses are invariant to logit shifts") {
  Rng rng(42);
  auto logits = make_tensor({3, 4}, 0.0);
  fill_uniform(logits, rng, -2.0, 2.0);
  auto shifted = make_tensor({3, 4}, 0.0);
  for (int b = 0; b < 3; ++b)
    for (int j = 0; j < 4; ++j)
      shifted->data[static_cast<size_t>(b) * 4 + static_cast<size_t>(j)] =
          logits->data[static_cast<size_t>(b) * 4 + static_cast<size_t>(j)] + 7.5;
  auto soft = make_tensor({3, 4}, 0.25);
  std::vector<int> labels{1, 0, 2};
  CHECK(reffakd_loss(shifted, soft, labels, 3.0, 0.6)->scalar() ==
        doctest::Approx(reffakd_loss(logits, soft, labels, 3.0, 0.6)->scalar()).epsilon(1e-9));

  auto teacher = make_tensor({3, 4}, 0.0);
  fill_uniform(teacher, rng, -2.0, 2.0);
  CHECK(vanilla_kd_loss(shifted, teacher, labels, 3.0, 0.6)->scalar() ==
        doctest::Approx(vanilla_kd_loss(logits, teacher, labels, 3.0, 0.6)->scalar())
            .epsilon(1e-9));
}

TEST_CASE("vanilla kd loss vanishes when teacher equals student") {
  Rng rng(43);
  auto logits = make_tensor({3, 4}, 0.0);
  fill_uniform(logits, rng, -2.0, 2.0);
  auto copy = make_tensor({3, 4}, logits->data);
  const double v = vanilla_kd_loss(logits, copy, {0, 1, 2}, 2.0, 1.0)->scalar();
  CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("extreme temperature flattens the kd term") {
  Rng rng(44);
  auto logits = make_tensor({2, 5}, 0.0);
  auto soft = make_tensor({2, 5}, 0.2);
  fill_uniform(logits, rng, -3.0, 3.0);
  const double t = 1e4;
  // At T this high both distributions are ~uniform, so the KL inside the
  // T^2-scaled term is tiny; divide the scale back out to see it.
  const double v = reffakd_loss(logits, soft, {0, 1}, t, 1.0)->scalar() / (t * t);
  CHECK(v < 1e-6);
}

TEST_CASE("kd losses validate their inputs") {
  auto logits = make_tensor({2, 3}, 0.0);
  auto soft = make_tensor({2, 3}, 1.0 / 3.0);
  CHECK_THROWS_AS(reffakd_loss(logits, soft, {0, 1}, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(reffakd_loss(logits, soft, {0, 1}, 2.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(reffakd_loss(logits, soft, {0, 1}, 2.0, 1.1), std::invalid_argument);
  auto narrow = make_tensor({2, 2}, 0.5);
  CHECK_THROWS_AS(reffakd_loss(logits, narrow, {0, 1}, 2.0, 0.5), std::invalid_argument);
}

TEST_CASE("gradcheck the composed kd losses") {
  Rng rng(45);
  auto logits = make_param({3, 4}, std::vector<double>(12, 0.0));
  fill_uniform(logits, rng, -1.5, 1.5);
  auto soft = make_tensor({3, 4}, std::vector<double>{0.4, 0.3, 0.2, 0.1, 0.1, 0.6, 0.2, 0.1,
                                                      0.25, 0.25, 0.3, 0.2});
  auto rep = gradcheck({logits}, [&] {
    return reffakd_loss(logits, soft, {0, 1, 2}, 3.0, 0.7);
  });
  CAPTURE(rep.where);
  CHECK(rep.ok);

  auto teacher = make_tensor({3, 4}, 0.0);
  fill_uniform(teacher, rng, -1.5, 1.5);
  rep = gradcheck({logits}, [&] {
    return vanilla_kd_loss(logits, teacher, {0, 1, 2}, 3.0, 0.7);
  });
  CHECK(rep.ok);
}

TEST_CASE("cae training reduces reconstruction loss and checkpoints") {
  TempDir tmp("cae_run");
  Dataset train = make_synth_dataset(10, 3);
  TrainConfig cfg = tiny_config(TrainMode::kCae, 4, 3);
  cfg.batch_size = 20;
  cfg.lr = 0.02;
  cfg.weight_decay = 0.0;
  cfg.checkpoint_path = tmp.file("cae.ckpt");
  Model cae(build_cae(1, 28, 28), 3);
  RunRecord rec = train_cae(cae, cfg, train);
  REQUIRE(rec.train_loss.size() == 4);
  CHECK(rec.test_acc.empty());
  CHECK(rec.train_loss.back() < rec.train_loss.front());
  CHECK(rec.best_epoch >= 0);

  Model reloaded(build_cae(1, 28, 28), 77);
  reloaded.load_checkpoint(cfg.checkpoint_path);
  auto pa = cae.parameters();
  auto pb = reloaded.parameters();
  bool best_is_last = rec.best_epoch == 3;
  if (best_is_last) {
    for (size_t i = 0; i < pa.size(); ++i)
      CHECK(std::memcmp(pa[i]->data.data(), pb[i]->data.data(),
                        pa[i]->data.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("zero learning rate freezes parameters and the loss") {
  Dataset train = make_synth_dataset(4, 5);  // 40 images, batch 20 divides evenly
  TrainConfig cfg = tiny_config(TrainMode::kCae, 3, 5);
  cfg.batch_size = 20;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  cfg.momentum = 0.0;
  Model cae(build_cae(1, 28, 28), 9);
  Model untouched(build_cae(1, 28, 28), 9);
  RunRecord rec = train_cae(cae, cfg, train);
  auto pa = cae.parameters();
  auto pb = untouched.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i]->data.data(), pb[i]->data.data(),
                      pa[i]->data.size() * sizeof(double)) == 0);
  // Shuffle order varies per epoch but with full batches and no parameter
  // motion the mean loss is the same up to summation order.
  for (double l : rec.train_loss)
    CHECK(l == doctest::Approx(rec.train_loss[0]).epsilon(1e-9));
}

TEST_CASE("divergence aborts with the epoch in the message") {
  Dataset train = make_synth_dataset(4, 5);
  TrainConfig cfg = tiny_config(TrainMode::kCae, 10, 5);
  cfg.batch_size = 20;
  // The sigmoid output bounds the reconstruction loss, so a huge lr alone
  // only saturates; lr * weight_decay >> 1 grows the weights geometrically
  // until inf * 0 activations turn the loss into NaN.
  cfg.lr = 1e16;
  cfg.weight_decay = 1e16;
  cfg.momentum = 0.0;
  Model cae(build_cae(1, 28, 28), 9);
  try {
    train_cae(cae, cfg, train);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("student training is deterministic in the seed") {
  Dataset train = make_synth_dataset(8, 13);
  Dataset test = make_synth_dataset(3, 14, "test");
  TrainConfig cfg = tiny_config(TrainMode::kBaseline, 2, 21);
  Model a(build_lenet5(10, 1, 28, 28), cfg.seed);
  Model b(build_lenet5(10, 1, 28, 28), cfg.seed);
  RunRecord ra = train_student(a, cfg, train, test, {});
  RunRecord rb = train_student(b, cfg, train, test, {});
  CHECK(same_metrics(ra, rb));
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.test_acc == rb.test_acc);

  TrainConfig cfg2 = cfg;
  cfg2.seed = 22;
  Model c(build_lenet5(10, 1, 28, 28), cfg2.seed);
  RunRecord rc = train_student(c, cfg2, train, test, {});
  CHECK_FALSE(same_metrics(ra, rc));
}

TEST_CASE("a near-one-hot table makes reffakd track the baseline") {
  Dataset train = make_synth_dataset(8, 13);
  Dataset test = make_synth_dataset(3, 14, "test");
  TrainConfig base = tiny_config(TrainMode::kBaseline, 2, 31);
  Model a(build_lenet5(10, 1, 28, 28), base.seed);
  RunRecord rb = train_student(a, base, train, test, {});

  TrainConfig kd = base;
  kd.mode = TrainMode::kReffakd;
  kd.temperature = 1.0;
  kd.alpha = 1.0;
  auto table = near_one_hot_table(10, 1e-9);
  TeacherSignal signal;
  signal.table = &table;
  Model b(build_lenet5(10, 1, 28, 28), kd.seed);
  RunRecord rk = train_student(b, kd, train, test, signal);
  REQUIRE(rk.train_loss.size() == rb.train_loss.size());
  for (size_t e = 0; e < rb.train_loss.size(); ++e)
    CHECK(rk.train_loss[e] == doctest::Approx(rb.train_loss[e]).epsilon(1e-3));
}

TEST_CASE("baseline learns the synthetic classes quickly") {
  Dataset train = make_synth_dataset(100, 51);
  Dataset test = make_synth_dataset(20, 52, "test");
  TrainConfig cfg = tiny_config(TrainMode::kBaseline, 2, 7);
  cfg.batch_size = 50;
  Model m(build_lenet5(10, 1, 28, 28), cfg.seed);
  RunRecord rec = train_student(m, cfg, train, test, {});
  CHECK(rec.best_acc > 10.0);
  CHECK(rec.best_epoch >= 0);
  CHECK(rec.test_acc.size() == 2);
}

TEST_CASE("modes demand their teacher signal") {
  Dataset train = make_synth_dataset(4, 5);
  Dataset test = make_synth_dataset(2, 6, "test");
  TrainConfig cfg = tiny_config(TrainMode::kReffakd, 1, 1);
  Model m(build_lenet5(10, 1, 28, 28), 1);
  CHECK_THROWS_AS(train_student(m, cfg, train, test, {}), std::invalid_argument);
  cfg.mode = TrainMode::kVanillaKd;
  CHECK_THROWS_AS(train_student(m, cfg, train, test, {}), std::invalid_argument);
}

TEST_CASE("metrics filenames embed mode, temperature, alpha and seed") {
  TrainConfig cfg = tiny_config(TrainMode::kBaseline, 1, 1);
  cfg.temperature = 5.0;
  cfg.alpha = 0.8;
  CHECK(metrics_filename(cfg) == "baseline_T5_a0.8_s1.csv");
  cfg.mode = TrainMode::kReffakd;
  cfg.temperature = 2.5;
  cfg.alpha = 0.6;
  cfg.seed = 3;
  CHECK(metrics_filename(cfg) == "reffakd_T2.5_a0.6_s3.csv");
}

TEST_CASE("metrics csv layout") {
  TempDir tmp("metrics");
  RunRecord rec;
  rec.config = tiny_config(TrainMode::kBaseline, 2, 1);
  rec.train_loss = {2.5, 1.25};
  rec.test_acc = {10.0, 52.5};
  write_metrics_csv(rec, tmp.file("m.csv"));
  const std::string text = slurp(tmp.file("m.csv"));
  CHECK(text.find("epoch,train_loss,test_acc\n") == 0);
  CHECK(text.find("\n1,") != std::string::npos);
  CHECK(text.find("\n2,") != std::string::npos);
  CHECK(text.find("52.5") != std::string::npos);

  RunRecord cae;
  cae.config = tiny_config(TrainMode::kCae, 1, 1);
  cae.train_loss = {0.125};
  write_metrics_csv(cae, tmp.file("c.csv"));
  const std::string ct = slurp(tmp.file("c.csv"));
  CHECK(ct.find("epoch,train_loss,test_acc\n") == 0);
  CHECK(ct.find("0.125,\n") != std::string::npos);  // empty accuracy column
}

TEST_CASE("the grid trains one student per unique cell") {
  Dataset train = make_synth_dataset(6, 61);
  Dataset test = make_synth_dataset(2, 62, "test");
  TrainConfig base = tiny_config(TrainMode::kReffakd, 1, 3);
  base.batch_size = 30;
  auto table = near_one_hot_table(10, 0.01);
  TeacherSignal signal;
  signal.table = &table;
  ModelSpec spec = build_lenet5(10, 1, 28, 28);

  GridResult grid = run_grid(spec, base, {1.0, 4.0}, {0.4, 0.8}, train, test, signal);
  CHECK(grid.records.size() == 4);
  CHECK(grid.failures.empty());
  CHECK(grid.records[0].config.temperature == 1.0);
  CHECK(grid.records[0].config.alpha == 0.4);
  CHECK(grid.records[1].config.alpha == 0.8);
  CHECK(grid.records[2].config.temperature == 4.0);

  GridResult dup = run_grid(spec, base, {2.0, 2.0}, {0.5}, train, test, signal);
  CHECK(dup.records.size() == 1);

  const std::string summary = grid_summary_csv(grid.records);
  CHECK(summary.find("temperature,alpha,accuracy,mode\n") == 0);
  CHECK(summary.find("\n1,0.4,") != std::string::npos);
  CHECK(summary.find(",reffakd") != std::string::npos);
}

TEST_CASE("grid failures are recorded without sinking the rest") {
  Dataset train = make_synth_dataset(4, 63);
  Dataset test = make_synth_dataset(2, 64, "test");
  TrainConfig base = tiny_config(TrainMode::kReffakd, 1, 3);
  base.batch_size = 20;
  auto table = near_one_hot_table(10, 0.01);
  TeacherSignal signal;
  signal.table = &table;
  GridResult grid = run_grid(build_lenet5(10, 1, 28, 28), base, {-1.0, 2.0}, {0.5}, train, test,
                             signal);
  CHECK(grid.records.size() == 1);
  CHECK(grid.failures.size() == 1);
  CHECK(grid.records[0].config.temperature == 2.0);
}

TEST_CASE("evaluation reports a percentage over the whole set") {
  Dataset ds = make_synth_dataset(2, 71, "test");
  Model m(build_lenet5(10, 1, 28, 28), 5);
  auto [mean, stddev] = compute_channel_stats(ds);
  const double acc = evaluate_top1(m, ds, 8, mean, stddev);
  CHECK(acc >= 0.0);
  CHECK(acc <= 100.0);
  // 20 samples: accuracy is a multiple of 5 percent.
  CHECK(std::abs(std::remainder(acc, 5.0)) < 1e-9);
}

}  // TEST_SUITE("train")
