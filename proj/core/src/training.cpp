#include "univ/training.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "univ/error.hpp"

namespace univ::train {
namespace {

constexpr std::uint64_t kDropoutStream = 0x6c6f7261;  // "lora"
constexpr std::uint64_t kAdapterInitStream = 0x41;

}  // namespace

void TrainConfig::validate() const {
  if (warmup_epochs > epochs) throw ConfigError("warmup_epochs exceeds epochs");
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be non-negative");
  if (lora) lora->validate();
}

Teacher make_teacher(const encoder::EncoderConfig& config) {
  Teacher t{config, encoder::init_params(config)};
  encoder::freeze(t.params);
  return t;
}

std::map<std::string, Tensor*> Student::trainable() {
  std::map<std::string, Tensor*> out;
  for (auto& [name, t] : params) {
    if (t.requires_grad()) out.emplace(name, &t);
  }
  if (adapters) out.merge(lora::trainable_tensors(*adapters));
  return out;
}

std::size_t Student::trainable_count() {
  std::size_t n = 0;
  for (const auto& [name, t] : trainable()) n += t->numel();
  return n;
}

Student make_student(const Teacher& teacher, const TrainConfig& cfg) {
  Student s{teacher.params, std::nullopt};
  if (cfg.lora) {
    s.adapters = lora::attach(s.params, *cfg.lora, Rng::derive(cfg.seed, kAdapterInitStream));
  } else {
    for (auto& [name, t] : s.params) t.set_requires_grad(true);
  }
  return s;
}

TrainState init_state(const Teacher& teacher, const TrainConfig& cfg) {
  cfg.validate();
  return TrainState{0, make_student(teacher, cfg), AdamW(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay), {}, {}};
}

Schedule make_schedule(const TrainConfig& cfg, std::size_t num_samples) {
  const std::size_t per_epoch = (num_samples + cfg.batch_size - 1) / cfg.batch_size;
  return Schedule{cfg.warmup_epochs * per_epoch, std::max<std::size_t>(1, cfg.epochs * per_epoch), cfg.base_lr};
}

LossTerms compute_loss(Var f_infrared, Var f_visible, Var f_teacher, const Tensor& teacher_attention,
                       const TrainConfig& cfg) {
  Var l_iv, l_vv;
  switch (cfg.loss_kind) {
    case pccl::LossKind::Pccl:
    case pccl::LossKind::PcclSoftmaxVariant: {
      const pccl::PseudoLabelMatrix labels = pccl::pseudo_labels(teacher_attention, cfg.gamma);
      Var s_iv = pccl::similarity(f_infrared, f_teacher, cfg.tau);
      Var s_vv = pccl::similarity(f_visible, f_teacher, cfg.tau);
      if (cfg.loss_kind == pccl::LossKind::Pccl) {
        l_iv = pccl::loss_iv(s_iv, labels);
        l_vv = pccl::loss_vv(s_vv, labels);
      } else {
        l_iv = pccl::loss_variant_softmax(s_iv, labels);
        l_vv = pccl::loss_variant_softmax(s_vv, labels);
      }
      break;
    }
    case pccl::LossKind::Mse:
      l_iv = ad::mse(f_infrared, f_teacher);
      l_vv = ad::mse(f_visible, f_teacher);
      break;
    case pccl::LossKind::Nce: {
      l_iv = pccl::diagonal_cross_entropy(pccl::similarity(f_infrared, f_teacher, cfg.tau));
      l_vv = pccl::diagonal_cross_entropy(pccl::similarity(f_visible, f_teacher, cfg.tau));
      break;
    }
  }
  return LossTerms{pccl::loss_pccl(l_iv, l_vv, cfg.alpha, cfg.beta), l_iv, l_vv};
}

StepMetrics train_step(TrainState& state, std::span<const data::PairedSample> batch, const Teacher& teacher,
                       const TrainConfig& cfg, const Schedule& schedule) {
  if (batch.empty()) throw ConfigError("train_step called with an empty batch");
  const encoder::EncoderConfig& enc = teacher.config;
  StepMetrics metrics;
  metrics.step = state.step;
  metrics.lr = lr_at(state.step, schedule);

  Student& student = state.student;
  auto trainable = student.trainable();
  for (auto& [name, t] : trainable) t->zero_grad();

  Rng dropout_rng(Rng::derive(cfg.seed, kDropoutStream + state.step));
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  try {
    for (const auto& sample : batch) {
      const encoder::EncoderOutput reference = encoder::encode(sample.visible, teacher.params, enc);

      Tape tape;
      VarMap vars = encoder::bind(tape, student.params);
      if (student.adapters) lora::bind(tape, *student.adapters, vars);
      encoder::ForwardOptions options{student.adapters ? &*student.adapters : nullptr, true, &dropout_rng};

      const Tensor infrared = sample.infrared.shape()[0] == enc.channels
                                  ? sample.infrared
                                  : encoder::replicate_channels(sample.infrared, enc.channels);
      Var f_infrared = encoder::encode(tape, vars, enc, infrared, options).features;
      Var f_visible = encoder::encode(tape, vars, enc, sample.visible, options).features;
      Var f_teacher = tape.constant(reference.features);

      LossTerms terms = compute_loss(f_infrared, f_visible, f_teacher, reference.attention_last, cfg);
      metrics.loss += terms.total.value().item() * inv_batch;
      metrics.l_iv += terms.l_iv.value().item() * inv_batch;
      metrics.l_vv += terms.l_vv.value().item() * inv_batch;

      tape.backward(ad::scale(terms.total, inv_batch));
      for (auto& [name, t] : trainable) {
        const auto g = tape.grad(vars.at(name));
        if (!g.empty()) t->accumulate_grad(g);
      }
    }
  } catch (const NumericError& e) {
    std::ostringstream msg;
    msg << "training aborted at step " << state.step << ": " << e.what();
    if (!state.log.empty()) msg << " (last finite loss " << state.log.back().loss << " at step " << state.log.back().step << ")";
    throw NumericError(msg.str());
  }
  if (!std::isfinite(metrics.loss)) {
    throw NumericError("training aborted at step " + std::to_string(state.step) + ": non-finite loss");
  }

  const bool objective_is_zero = cfg.alpha == 0.0 && cfg.beta == 0.0;
  if (!objective_is_zero) state.optimizer.step(trainable, metrics.lr);
  for (auto& [name, t] : trainable) t->clear_grad();

  ++state.step;
  state.log.push_back(metrics);
  return metrics;
}

void run_training(TrainState& state, std::span<const data::PairedSample> samples, const Teacher& teacher,
                  const TrainConfig& cfg, const EpochCallback& on_epoch_end) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("no training samples");
  const Schedule schedule = make_schedule(cfg, samples.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : data::batch_indices(samples.size(), cfg.batch_size, cfg.seed, epoch)) {
      std::vector<data::PairedSample> batch;
      batch.reserve(idx.size());
      for (auto i : idx) batch.push_back(samples[i]);
      train_step(state, batch, teacher, cfg, schedule);
    }
    if (on_epoch_end) on_epoch_end(state, epoch);
  }
}

std::string to_jsonl(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["lr"] = m.lr;
  j["loss"] = m.loss;
  j["l_iv"] = m.l_iv;
  j["l_vv"] = m.l_vv;
  return j.dump();
}

std::string to_jsonl(const ProbeRecord& p) {
  nlohmann::ordered_json j;
  j["epoch"] = p.epoch;
  j["visible_probe"] = p.visible_accuracy;
  j["infrared_probe"] = p.infrared_accuracy;
  return j.dump();
}

}  // namespace univ::train
