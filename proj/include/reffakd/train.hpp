#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reffakd/dataset.hpp"
#include "reffakd/model.hpp"
#include "reffakd/softlabel.hpp"
#include "reffakd/tensor.hpp"

namespace reffakd {

enum class TrainMode { kCae, kBaseline, kVanillaKd, kReffakd };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kBaseline;
  int epochs = 200;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_factor = 0.2;
  std::vector<int> decay_epochs = {60, 120, 160};
  double temperature = 5.0;
  double alpha = 0.8;
  uint64_t seed = 0;
  AugmentPolicy augment;              // student runs augment by default; CAE runs do not
  std::string checkpoint_path;        // train_cae writes its best checkpoint here if set
};

void validate_train_config(const TrainConfig& cfg);

struct RunRecord {
  TrainConfig config;
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> test_acc;    // percent, one entry per epoch (empty for CAE runs)
  double best_acc = 0.0;
  int best_epoch = -1;  // 0-based epoch of best_acc (best train loss for CAE)
  double wall_seconds = 0.0;
};

/// Metric equality ignoring wall-clock time.
bool same_metrics(const RunRecord& a, const RunRecord& b);

/// alpha * T^2 * KL(soft_rows || softmax(student/T)) + (1-alpha) * CE.
/// soft_rows carry no temperature. soft_rows is [b,c] of target
/// distributions, one per sample.
TensorPtr reffakd_loss(const TensorPtr& student_logits, const TensorPtr& soft_rows,
                       const std::vector<int>& hard_labels, double temperature, double alpha);

/// alpha * T^2 * KL(softmax(teacher/T) || softmax(student/T)) + (1-alpha) * CE.
TensorPtr vanilla_kd_loss(const TensorPtr& student_logits, const TensorPtr& teacher_logits,
                          const std::vector<int>& hard_labels, double temperature, double alpha);

/// Trains the autoencoder on MSE reconstruction and keeps the checkpoint of
/// the best train-loss epoch. Aborts with a diagnostic if the loss stops
/// being finite.
RunRecord train_cae(Model& cae, const TrainConfig& cfg, const Dataset& train);

struct TeacherSignal {
  Model* teacher = nullptr;            // required for vanilla_kd
  const SoftLabelTable* table = nullptr;  // required for reffakd
};

/// One classifier training run: per-epoch seeded shuffle, augmentation,
/// per-channel normalization (train-set statistics), the mode's loss, SGD
/// with the step-decay schedule, and a full test evaluation every epoch.
RunRecord train_student(Model& student, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& test, const TeacherSignal& signal);

/// Top-1 accuracy in percent (ties resolve to the lowest class index).
double evaluate_top1(Model& model, const Dataset& ds, int batch_size,
                     const std::vector<double>& mean, const std::vector<double>& stddev);

struct GridResult {
  std::vector<RunRecord> records;
  std::vector<std::string> failures;
};

/// One train_student per (T, alpha) cell, T-major alpha-minor. Duplicate
/// cells are skipped with a warning; failed cells are recorded and the rest
/// continue. Each cell trains a fresh student seeded from the base config.
GridResult run_grid(const ModelSpec& student_spec, const TrainConfig& base,
                    const std::vector<double>& temperatures, const std::vector<double>& alphas,
                    const Dataset& train, const Dataset& test, const TeacherSignal& signal);

/// `<mode>_T<t>_a<alpha>_s<seed>.csv`
std::string metrics_filename(const TrainConfig& cfg);

/// Header `epoch,train_loss,test_acc`; epochs are 1-based; CAE rows leave
/// test_acc empty.
void write_metrics_csv(const RunRecord& record, const std::string& path);

/// Header `temperature,alpha,accuracy,mode`, one row per record.
std::string grid_summary_csv(const std::vector<RunRecord>& records);

}  // namespace reffakd
