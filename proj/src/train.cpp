#include "reffakd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "reffakd/ops.hpp"
#include "reffakd/optim.hpp"

namespace reffakd {

namespace {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_batch_logits(const TensorPtr& logits, size_t batch, const char* who) {
  if (!logits || logits->rank() != 2)
    throw std::invalid_argument(std::string(who) + ": logits must be [batch, classes]");
  if (static_cast<size_t>(logits->dim(0)) != batch)
    throw std::invalid_argument(std::string(who) + ": logits batch " +
                                std::to_string(logits->dim(0)) + " does not match " +
                                std::to_string(batch) + " labels");
}

/// Assembles [count, c, h, w] from dataset rows, optionally augmenting from
/// `rng` and normalizing per channel.
TensorPtr assemble_batch(const Dataset& ds, const std::vector<size_t>& order, size_t start,
                         size_t count, const AugmentPolicy* policy, Rng* rng,
                         const std::vector<double>* mean, const std::vector<double>* stddev) {
  const size_t pix = static_cast<size_t>(ds.height) * ds.width;
  const size_t numel = static_cast<size_t>(ds.image_numel());
  std::vector<double> data(count * numel);
  for (size_t k = 0; k < count; ++k) {
    const auto& raw = ds.images[order[start + k]];
    std::vector<double> img =
        policy && policy->enabled ? augment(raw, ds.channels, ds.height, ds.width, *policy, *rng)
                                  : raw;
    if (mean)
      for (int c = 0; c < ds.channels; ++c) {
        const double m = (*mean)[static_cast<size_t>(c)];
        const double inv = 1.0 / (*stddev)[static_cast<size_t>(c)];
        double* p = img.data() + static_cast<size_t>(c) * pix;
        for (size_t t = 0; t < pix; ++t) p[t] = (p[t] - m) * inv;
      }
    std::copy(img.begin(), img.end(), data.begin() + k * numel);
  }
  return make_tensor({static_cast<int>(count), ds.channels, ds.height, ds.width},
                     std::move(data));
}

[[noreturn]] void report_divergence(const char* who, int epoch, double value) {
  throw std::runtime_error(std::string(who) + ": loss became non-finite (" +
                           format_g17(value) + ") at epoch " + std::to_string(epoch + 1) +
                           "; lower the learning rate or check the inputs");
}

}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kCae: return "cae";
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kVanillaKd: return "vanilla_kd";
    case TrainMode::kReffakd: return "reffakd";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "cae") return TrainMode::kCae;
  if (name == "baseline") return TrainMode::kBaseline;
  if (name == "vanilla_kd") return TrainMode::kVanillaKd;
  if (name == "reffakd") return TrainMode::kReffakd;
  throw std::invalid_argument("unknown train mode '" + name +
                              "' (expected cae, baseline, vanilla_kd, or reffakd)");
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (cfg.lr < 0.0) throw std::invalid_argument("train config: lr must be >= 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw std::invalid_argument("train config: momentum must be in [0,1)");
  if (cfg.weight_decay < 0.0)
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(cfg.decay_factor > 0.0) || cfg.decay_factor > 1.0)
    throw std::invalid_argument("train config: decay_factor must be in (0,1]");
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("train config: temperature must be > 0");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
    throw std::invalid_argument("train config: alpha must be in [0,1]");
  validate_augment_policy(cfg.augment);
}

bool same_metrics(const RunRecord& a, const RunRecord& b) {
  return a.train_loss == b.train_loss && a.test_acc == b.test_acc && a.best_acc == b.best_acc &&
         a.best_epoch == b.best_epoch;
}

TensorPtr reffakd_loss(const TensorPtr& student_logits, const TensorPtr& soft_rows,
                       const std::vector<int>& hard_labels, double temperature, double alpha) {
  if (!(temperature > 0.0)) throw std::invalid_argument("reffakd_loss: temperature must be > 0");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("reffakd_loss: alpha must be in [0,1]");
  check_batch_logits(student_logits, hard_labels.size(), "reffakd_loss");
  if (!soft_rows || soft_rows->shape != student_logits->shape)
    throw std::invalid_argument("reffakd_loss: soft_rows must match the logits shape");
  const TensorPtr kl =
      ops::kl_div_loss(soft_rows, ops::log_softmax_t(student_logits, temperature));
  const TensorPtr ce = ops::cross_entropy_loss(student_logits, hard_labels);
  return ops::add(ops::scale(kl, alpha * temperature * temperature),
                  ops::scale(ce, 1.0 - alpha));
}

TensorPtr vanilla_kd_loss(const TensorPtr& student_logits, const TensorPtr& teacher_logits,
                          const std::vector<int>& hard_labels, double temperature, double alpha) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("vanilla_kd_loss: temperature must be > 0");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("vanilla_kd_loss: alpha must be in [0,1]");
  check_batch_logits(student_logits, hard_labels.size(), "vanilla_kd_loss");
  if (!teacher_logits || teacher_logits->shape != student_logits->shape)
    throw std::invalid_argument("vanilla_kd_loss: teacher logits must match the student shape");
  const TensorPtr kl = ops::kl_div_loss(ops::softmax_t(teacher_logits, temperature),
                                        ops::log_softmax_t(student_logits, temperature));
  const TensorPtr ce = ops::cross_entropy_loss(student_logits, hard_labels);
  return ops::add(ops::scale(kl, alpha * temperature * temperature),
                  ops::scale(ce, 1.0 - alpha));
}

RunRecord train_cae(Model& cae, const TrainConfig& cfg, const Dataset& train) {
  validate_train_config(cfg);
  if (cfg.mode != TrainMode::kCae)
    throw std::invalid_argument("train_cae: config mode must be cae");
  if (train.images.empty()) throw std::invalid_argument("train_cae: empty dataset");

  const double t0 = now_seconds();
  RunRecord record;
  record.config = cfg;
  SgdOptimizer opt(cae.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay, cfg.decay_factor,
                   cfg.decay_epochs);
  const Rng base(cfg.seed);
  const size_t n = train.images.size();
  double best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = base.fork(static_cast<uint64_t>(epoch));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    er.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t count = std::min(static_cast<size_t>(cfg.batch_size), n - start);
      const TensorPtr x = assemble_batch(train, order, start, count,
                                         cfg.augment.enabled ? &cfg.augment : nullptr, &er,
                                         nullptr, nullptr);
      const TensorPtr out = cae.forward(x, /*training=*/true);
      const TensorPtr loss = ops::mse_loss(out, x);
      const double value = loss->scalar();
      if (!std::isfinite(value)) report_divergence("train_cae", epoch, value);
      loss_sum += value * static_cast<double>(count);
      opt.zero_grad();
      backward(loss);
      opt.step(epoch);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    record.train_loss.push_back(epoch_loss);
    if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      record.best_epoch = epoch;
      if (!cfg.checkpoint_path.empty()) cae.save_checkpoint(cfg.checkpoint_path);
    }
  }
  record.wall_seconds = now_seconds() - t0;
  return record;
}

RunRecord train_student(Model& student, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& test, const TeacherSignal& signal) {
  validate_train_config(cfg);
  if (cfg.mode == TrainMode::kCae)
    throw std::invalid_argument("train_student: use train_cae for mode cae");
  if (cfg.mode == TrainMode::kVanillaKd && signal.teacher == nullptr)
    throw std::invalid_argument("train_student: mode vanilla_kd needs a teacher model");
  if (cfg.mode == TrainMode::kReffakd && signal.table == nullptr)
    throw std::invalid_argument("train_student: mode reffakd needs a soft-label table");
  if (train.images.empty()) throw std::invalid_argument("train_student: empty train set");
  if (cfg.mode == TrainMode::kReffakd && signal.table->c != train.num_classes)
    throw std::invalid_argument("train_student: soft-label table has " +
                                std::to_string(signal.table->c) + " classes, dataset has " +
                                std::to_string(train.num_classes));

  const double t0 = now_seconds();
  RunRecord record;
  record.config = cfg;
  SgdOptimizer opt(student.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay,
                   cfg.decay_factor, cfg.decay_epochs);
  const auto [mean, stddev] = compute_channel_stats(train);
  const Rng base(cfg.seed);
  const size_t n = train.images.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = base.fork(static_cast<uint64_t>(epoch));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    er.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t count = std::min(static_cast<size_t>(cfg.batch_size), n - start);
      const TensorPtr x = assemble_batch(train, order, start, count,
                                         cfg.augment.enabled ? &cfg.augment : nullptr, &er,
                                         &mean, &stddev);
      std::vector<int> labels(count);
      for (size_t k = 0; k < count; ++k) labels[k] = train.labels[order[start + k]];

      const TensorPtr logits = student.forward(x, /*training=*/true);
      TensorPtr loss;
      switch (cfg.mode) {
        case TrainMode::kBaseline:
          loss = ops::cross_entropy_loss(logits, labels);
          break;
        case TrainMode::kVanillaKd: {
          TensorPtr teacher_logits;
          {
            NoGradGuard no_grad;  // teacher scores the same augmented batch
            teacher_logits = signal.teacher->forward(x, /*training=*/false);
          }
          loss = vanilla_kd_loss(logits, teacher_logits, labels, cfg.temperature, cfg.alpha);
          break;
        }
        case TrainMode::kReffakd: {
          std::vector<double> rows(count * static_cast<size_t>(signal.table->c));
          for (size_t k = 0; k < count; ++k) {
            const double* r = signal.table->row(labels[k]);
            std::copy(r, r + signal.table->c,
                      rows.begin() + k * static_cast<size_t>(signal.table->c));
          }
          const TensorPtr soft =
              make_tensor({static_cast<int>(count), signal.table->c}, std::move(rows));
          loss = reffakd_loss(logits, soft, labels, cfg.temperature, cfg.alpha);
          break;
        }
        case TrainMode::kCae:
          break;  // rejected above
      }
      const double value = loss->scalar();
      if (!std::isfinite(value)) report_divergence("train_student", epoch, value);
      loss_sum += value * static_cast<double>(count);
      opt.zero_grad();
      backward(loss);
      opt.step(epoch);
    }
    record.train_loss.push_back(loss_sum / static_cast<double>(n));

    const double acc = evaluate_top1(student, test, cfg.batch_size, mean, stddev);
    record.test_acc.push_back(acc);
    if (acc > record.best_acc || record.best_epoch < 0) {
      record.best_acc = acc;
      record.best_epoch = epoch;
    }
  }
  record.wall_seconds = now_seconds() - t0;
  return record;
}

double evaluate_top1(Model& model, const Dataset& ds, int batch_size,
                     const std::vector<double>& mean, const std::vector<double>& stddev) {
  if (ds.images.empty()) throw std::invalid_argument("evaluate_top1: empty dataset");
  NoGradGuard no_grad;
  std::vector<size_t> order(ds.images.size());
  std::iota(order.begin(), order.end(), 0);
  size_t correct = 0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(static_cast<size_t>(batch_size), order.size() - start);
    const TensorPtr x =
        assemble_batch(ds, order, start, count, nullptr, nullptr, &mean, &stddev);
    const TensorPtr logits = model.forward(x, /*training=*/false);
    const int c = logits->dim(1);
    for (size_t k = 0; k < count; ++k) {
      const double* row = logits->data.data() + k * static_cast<size_t>(c);
      int arg = 0;
      for (int j = 1; j < c; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == ds.labels[order[start + k]]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(order.size());
}

GridResult run_grid(const ModelSpec& student_spec, const TrainConfig& base,
                    const std::vector<double>& temperatures, const std::vector<double>& alphas,
                    const Dataset& train, const Dataset& test, const TeacherSignal& signal) {
  if (temperatures.empty() || alphas.empty())
    throw std::invalid_argument("run_grid: temperature and alpha lists must be nonempty");

  GridResult result;
  std::set<std::pair<double, double>> seen;
  for (double t : temperatures)
    for (double a : alphas) {
      if (!seen.insert({t, a}).second) {
        std::cerr << "run_grid: duplicate cell T=" << format_g(t) << " alpha=" << format_g(a)
                  << " skipped\n";
        continue;
      }
      TrainConfig cfg = base;
      cfg.temperature = t;
      cfg.alpha = a;
      try {
        Model student(student_spec, cfg.seed);
        result.records.push_back(train_student(student, cfg, train, test, signal));
      } catch (const std::exception& e) {
        const std::string msg = "cell T=" + format_g(t) + " alpha=" + format_g(a) +
                                " failed: " + e.what();
        std::cerr << "run_grid: " << msg << "\n";
        result.failures.push_back(msg);
      }
    }
  return result;
}

std::string metrics_filename(const TrainConfig& cfg) {
  return std::string(train_mode_name(cfg.mode)) + "_T" + format_g(cfg.temperature) + "_a" +
         format_g(cfg.alpha) + "_s" + std::to_string(cfg.seed) + ".csv";
}

void write_metrics_csv(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
  out << "epoch,train_loss,test_acc\n";
  for (size_t e = 0; e < record.train_loss.size(); ++e) {
    out << (e + 1) << "," << format_g17(record.train_loss[e]) << ",";
    if (e < record.test_acc.size()) out << format_g17(record.test_acc[e]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing metrics csv: " + path);
}

std::string grid_summary_csv(const std::vector<RunRecord>& records) {
  std::string csv = "temperature,alpha,accuracy,mode\n";
  for (const RunRecord& r : records) {
    csv += format_g(r.config.temperature);
    csv += ",";
    csv += format_g(r.config.alpha);
    csv += ",";
    csv += format_g17(r.best_acc);
    csv += ",";
    csv += train_mode_name(r.config.mode);
    csv += "\n";
  }
  return csv;
}

}  // namespace reffakd
