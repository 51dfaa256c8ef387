#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/lora.hpp"
#include "univ/optim.hpp"
#include "univ/pccl.hpp"

namespace univ::train {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t warmup_epochs = 0;
  double base_lr = 1.5e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  double tau = pccl::kDefaultTau;
  double gamma = pccl::kDefaultGamma;
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<lora::LoraConfig> lora;
  pccl::LossKind loss_kind = pccl::LossKind::Pccl;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Frozen visible encoder supplying reference features and attention.
struct Teacher {
  encoder::EncoderConfig config;
  ParameterSet params;
};

Teacher make_teacher(const encoder::EncoderConfig& config);

struct Student {
  ParameterSet params;
  std::optional<lora::AdapterSet> adapters;

  /// Tensors the optimizer updates: adapters and position table under LoRA,
  /// every parameter otherwise.
  std::map<std::string, Tensor*> trainable();
  std::size_t trainable_count();
};

/// Copy of the teacher; attaches adapters when cfg.lora is set.
Student make_student(const Teacher& teacher, const TrainConfig& cfg);

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l_iv = 0.0;
  double l_vv = 0.0;
};

struct ProbeRecord {
  std::size_t epoch = 0;
  double visible_accuracy = 0.0;
  double infrared_accuracy = 0.0;
};

struct TrainState {
  std::size_t step = 0;
  Student student;
  AdamW optimizer;
  std::vector<StepMetrics> log;
  std::vector<ProbeRecord> probes;
};

TrainState init_state(const Teacher& teacher, const TrainConfig& cfg);

/// Schedule for a run of cfg.epochs over `num_samples` pairs.
Schedule make_schedule(const TrainConfig& cfg, std::size_t num_samples);

/// Per-pair loss terms as recorded on a tape.
struct LossTerms {
  Var total;
  Var l_iv;
  Var l_vv;
};

/// Builds the configured objective from student infrared/visible features and
/// the detached teacher features and attention.
LossTerms compute_loss(Var f_infrared, Var f_visible, Var f_teacher, const Tensor& teacher_attention,
                       const TrainConfig& cfg);

/// One AdamW update on the mean loss of `batch`.
///
/// The teacher runs gradient-free on the visible image; the student encodes
/// the infrared image (channels replicated) and the visible image with shared
/// parameters. When alpha and beta are both zero the loss is identically zero
/// and no update is applied. Throws NumericError naming the step on NaN/Inf.
StepMetrics train_step(TrainState& state, std::span<const data::PairedSample> batch, const Teacher& teacher,
                       const TrainConfig& cfg, const Schedule& schedule);

using EpochCallback = std::function<void(TrainState&, std::size_t epoch)>;

/// cfg.epochs passes over `samples` with seeded shuffling.
void run_training(TrainState& state, std::span<const data::PairedSample> samples, const Teacher& teacher,
                  const TrainConfig& cfg, const EpochCallback& on_epoch_end = {});

std::string to_jsonl(const StepMetrics& m);
std::string to_jsonl(const ProbeRecord& p);

}  // namespace univ::train
