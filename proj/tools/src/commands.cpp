#include "univ_cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "univ/error.hpp"
#include "univ/image_io.hpp"
#include "univ/tensor_io.hpp"

namespace univ::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kTeacherStream = 1;
constexpr std::uint64_t kPairsStream = 2;
constexpr std::uint64_t kProbeStream = 3;

std::vector<data::PairedSample> training_pairs(const RunConfig& cfg) {
  if (cfg.manifest) return data::load_pairs(*cfg.manifest);
  return data::make_training_pairs(cfg.task(), cfg.pairs, cfg.night_fraction, Rng::derive(cfg.seed, kPairsStream));
}

std::vector<data::LabeledSample> probe_set(const RunConfig& cfg) {
  return data::make_probe_set(cfg.task(), cfg.probe_samples, Rng::derive(cfg.seed, kProbeStream));
}

train::Teacher load_teacher(const RunConfig& cfg) {
  encoder::EncoderConfig enc = cfg.encoder;
  enc.seed = Rng::derive(cfg.seed, kTeacherStream);
  if (!cfg.teacher_checkpoint) return train::make_teacher(enc);

  Checkpoint ckpt = load_checkpoint(*cfg.teacher_checkpoint);
  const ParameterSet reference = encoder::init_params(enc);
  for (const auto& [name, t] : reference) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw ConfigError("teacher checkpoint lacks parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw ConfigError("teacher parameter '" + name + "' has shape " + shape_str(it->second.shape()) + ", config expects " +
                        shape_str(t.shape()));
    }
  }
  if (ckpt.tensors.size() != reference.size()) throw ConfigError("teacher checkpoint has unexpected extra tensors");
  encoder::freeze(ckpt.tensors);
  return train::Teacher{enc, std::move(ckpt.tensors)};
}

std::map<std::string, std::string> checkpoint_header(const encoder::EncoderConfig& enc, std::size_t step) {
  auto header = encoder_header(enc);
  header["step"] = std::to_string(step);
  return header;
}

double mean_loss(const std::vector<train::StepMetrics>& log, std::size_t first) {
  if (first >= log.size()) return 0.0;
  double total = 0.0;
  for (std::size_t i = first; i < log.size(); ++i) total += log[i].loss;
  return total / static_cast<double>(log.size() - first);
}

struct RunSummary {
  double final_loss = 0.0;
  train::ProbeScores probe;
  std::size_t trainable = 0;
};

// Train from scratch under `cfg` and probe the result.
RunSummary train_and_probe(const RunConfig& cfg, std::span<const data::PairedSample> pairs,
                           std::span<const data::LabeledSample> probes) {
  const train::Teacher teacher = load_teacher(cfg);
  const train::TrainConfig tcfg = cfg.resolved_train();
  train::TrainState state = train::init_state(teacher, tcfg);
  RunSummary summary;
  summary.trainable = state.student.trainable_count();
  std::size_t epoch_start = 0;
  train::run_training(state, pairs, teacher, tcfg, [&](train::TrainState& s, std::size_t) {
    summary.final_loss = mean_loss(s.log, epoch_start);
    epoch_start = s.log.size();
  });
  if (!probes.empty()) {
    const lora::AdapterSet* adapters = state.student.adapters ? &*state.student.adapters : nullptr;
    summary.probe = train::probe_encoder(probes, state.student.params, teacher.config, adapters, cfg.probe());
  }
  return summary;
}

void require_epochs(const RunConfig& cfg, const char* command) {
  if (cfg.train.epochs == 0) throw ConfigError(std::string(command) + " needs epochs >= 1");
}

}  // namespace

std::map<std::string, std::string> encoder_header(const encoder::EncoderConfig& c) {
  return {{"kind", "encoder"},
          {"image_size", std::to_string(c.image_size)},
          {"patch_size", std::to_string(c.patch_size)},
          {"channels", std::to_string(c.channels)},
          {"depth", std::to_string(c.depth)},
          {"dim", std::to_string(c.dim)},
          {"heads", std::to_string(c.heads)},
          {"mlp_ratio", std::to_string(c.mlp_ratio)}};
}

encoder::EncoderConfig encoder_from_header(const std::map<std::string, std::string>& header) {
  auto field = [&](const char* key) -> std::size_t {
    auto it = header.find(key);
    if (it == header.end()) throw DataError(std::string("checkpoint header lacks '") + key + "'");
    try {
      return std::stoul(it->second);
    } catch (const std::exception&) {
      throw DataError(std::string("checkpoint header '") + key + "' is not an integer");
    }
  };
  encoder::EncoderConfig c;
  c.image_size = field("image_size");
  c.patch_size = field("patch_size");
  c.channels = field("channels");
  c.depth = field("depth");
  c.dim = field("dim");
  c.heads = field("heads");
  c.mlp_ratio = field("mlp_ratio");
  c.validate();
  return c;
}

void gen_data(const GenDataOptions& options, std::ostream& log) {
  if (options.sequence_length == 0) throw ConfigError("sequence length must be at least 1");
  const auto pairs = data::make_training_pairs(data::synthetic_task(options.image_size), options.pairs, options.night_fraction, options.seed);

  fs::create_directories(options.out / "visible");
  fs::create_directories(options.out / "infrared");
  std::vector<data::ManifestEntry> entries;
  entries.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    char seq[32];
    std::snprintf(seq, sizeof seq, "seq_%03zu", i / options.sequence_length);
    data::ManifestEntry e{p.scene_id, fs::path("visible") / (p.scene_id + ".ppm"),
                          fs::path("infrared") / (p.scene_id + ".pgm"), seq};
    data::write_pnm(options.out / e.visible, data::from_tensor(p.visible));
    data::write_pnm(options.out / e.infrared, data::from_tensor(p.infrared));
    entries.push_back(std::move(e));
  }
  data::write_manifest(options.out / "manifest.tsv", entries);
  log << "wrote " << entries.size() << " pairs to " << options.out.string() << "\n";
}

void pretrain(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  log << "# config\n" << describe(cfg);
  const train::Teacher teacher = load_teacher(cfg);
  const train::TrainConfig tcfg = cfg.resolved_train();
  train::TrainState state = train::init_state(teacher, tcfg);
  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "initial.ckpt", state.student.params, checkpoint_header(teacher.config, 0));
  if (tcfg.epochs == 0) return;

  const auto pairs = training_pairs(cfg);
  const auto probes = probe_set(cfg);
  save_checkpoint(out_dir / "teacher.ckpt", teacher.params, checkpoint_header(teacher.config, 0));
  log << "training on " << pairs.size() << " pairs, " << state.student.trainable_count() << " trainable parameters\n";

  std::ofstream metrics(out_dir / "metrics.jsonl");
  if (!metrics) throw DataError("cannot write " + (out_dir / "metrics.jsonl").string());
  std::size_t written = 0;
  auto flush_steps = [&](const train::TrainState& s) {
    for (; written < s.log.size(); ++written) metrics << train::to_jsonl(s.log[written]) << "\n";
    metrics.flush();
  };

  double best_loss = INFINITY;
  train::Student best = state.student;
  std::size_t epoch_start = 0;
  try {
    train::run_training(state, pairs, teacher, tcfg, [&](train::TrainState& s, std::size_t epoch) {
      flush_steps(s);
      const double loss = mean_loss(s.log, epoch_start);
      epoch_start = s.log.size();
      if (!probes.empty()) {
        const lora::AdapterSet* adapters = s.student.adapters ? &*s.student.adapters : nullptr;
        const auto scores = train::probe_encoder(probes, s.student.params, teacher.config, adapters, cfg.probe());
        s.probes.push_back({epoch, scores.visible, scores.infrared});
        metrics << train::to_jsonl(s.probes.back()) << "\n";
      }
      log << "epoch " << epoch << " mean loss " << loss << "\n";
      if (loss < best_loss) {
        best_loss = loss;
        best = s.student;
      }
    });
  } catch (const NumericError&) {
    flush_steps(state);
    throw;
  }

  save_checkpoint(out_dir / "final.ckpt", state.student.params, checkpoint_header(teacher.config, state.step));
  save_checkpoint(out_dir / "best.ckpt", best.params, checkpoint_header(teacher.config, state.step));
  if (state.student.adapters) {
    lora::save_adapters(out_dir / "final_adapters.ckpt", *state.student.adapters);
    lora::save_adapters(out_dir / "best_adapters.ckpt", *best.adapters);
  }
}

void ablate(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  require_epochs(cfg, "ablate");
  log << "# config\n" << describe(cfg);
  const auto pairs = training_pairs(cfg);
  const auto probes = probe_set(cfg);
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %14s %14s %14s\n", "loss", "final_loss", "visible_probe", "infrared_probe");
  out << line;
  for (pccl::LossKind kind : {pccl::LossKind::Mse, pccl::LossKind::Nce, pccl::LossKind::Pccl}) {
    RunConfig run = cfg;
    run.train.loss_kind = kind;
    const RunSummary s = train_and_probe(run, pairs, probes);
    std::snprintf(line, sizeof line, "%-6s %14.6f %14.4f %14.4f\n", std::string(pccl::to_string(kind)).c_str(),
                  s.final_loss, s.probe.visible, s.probe.infrared);
    out << line;
  }
}

void forget(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  require_epochs(cfg, "forget");
  log << "# config\n" << describe(cfg);
  const train::ForgettingReport report = train::forgetting_experiment(cfg.forgetting());
  out << train::format_report(report);
  const auto& c = report.checks;
  auto verdict = [](bool ok) { return ok ? "yes" : "no"; };
  out << "infrared (b) >= (a): " << verdict(c.infrared_b_ge_a) << "\n";
  out << "visible (c) >= (b): " << verdict(c.visible_c_ge_b) << "\n";
  out << "visible (e) within one point of (a): " << verdict(c.visible_e_near_a) << "\n";
  out << "infrared (e) >= (a): " << verdict(c.infrared_e_ge_a) << "\n";
}

void sweep_rank(const RunConfig& cfg, const std::vector<std::size_t>& ranks, std::ostream& out, std::ostream& log) {
  require_epochs(cfg, "sweep-rank");
  if (ranks.empty()) throw ConfigError("sweep-rank needs at least one rank");
  log << "# config\n" << describe(cfg);
  const auto pairs = training_pairs(cfg);
  const auto probes = probe_set(cfg);
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %10s %14s %14s %14s\n", "rank", "trainable", "final_loss", "visible_probe",
                "infrared_probe");
  out << line;
  for (std::size_t r : ranks) {
    RunConfig run = cfg;
    run.use_lora = true;
    run.lora.rank = r;
    const RunSummary s = train_and_probe(run, pairs, probes);
    std::snprintf(line, sizeof line, "%-6zu %10zu %14.6f %14.4f %14.4f\n", r, s.trainable, s.final_loss,
                  s.probe.visible, s.probe.infrared);
    out << line;
  }
}

double merge(const MergeOptions& options, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  const encoder::EncoderConfig enc = encoder_from_header(ckpt.header);
  const lora::AdapterSet adapters = lora::load_adapters(options.adapters);
  const ParameterSet merged = lora::merge_all(ckpt.tensors, adapters);
  save_checkpoint(options.out, merged, ckpt.header);

  Rng rng(options.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < options.verify_inputs; ++k) {
    Tensor image({enc.channels, enc.image_size, enc.image_size});
    for (auto& v : image.data()) v = rng.uniform();
    const Tensor two_path = encoder::encode(image, ckpt.tensors, enc, &adapters).features;
    const Tensor single = encoder::encode(image, merged, enc).features;
    for (std::size_t i = 0; i < single.numel(); ++i) worst = std::max(worst, std::abs(two_path[i] - single[i]));
  }
  out << "merged " << adapters.adapters.size() << " adapters into " << options.out.string() << "\n";
  out << "verification: max abs diff " << worst << " over " << options.verify_inputs << " random inputs\n";
  return worst;
}

void dump_matrices(const DumpOptions& options, std::ostream& log) {
  const Checkpoint teacher = load_checkpoint(options.teacher);
  const Checkpoint student = load_checkpoint(options.student);
  const encoder::EncoderConfig enc = encoder_from_header(teacher.header);
  if (encoder_header(encoder_from_header(student.header)) != encoder_header(enc)) {
    throw ConfigError("teacher and student checkpoints describe different encoders");
  }
  std::optional<lora::AdapterSet> adapters;
  if (options.adapters) adapters = lora::load_adapters(*options.adapters);
  const lora::AdapterSet* adapter_ptr = adapters ? &*adapters : nullptr;

  fs::create_directories(options.out);
  const auto entries = data::read_manifest(options.manifest);
  const std::size_t count = std::min(options.count, entries.size());
  for (std::size_t i = 0; i < count; ++i) {
    const data::PairedSample pair = data::load_pair(entries[i]);
    const encoder::EncoderOutput reference = encoder::encode(pair.visible, teacher.tensors, enc);
    const Tensor infrared = encoder::replicate_channels(pair.infrared, enc.channels);
    const Tensor f_i = encoder::encode(infrared, student.tensors, enc, adapter_ptr).features;
    const Tensor f_v = encoder::encode(pair.visible, student.tensors, enc, adapter_ptr).features;

    const fs::path stem = options.out / pair.scene_id;
    save_tensor(stem.string() + ".M_IV_S.tnsr", pccl::similarity(f_i, reference.features, options.tau).values);
    save_tensor(stem.string() + ".M_VV_S.tnsr",
                pccl::similarity(f_v, reference.features, options.tau, pccl::SimilarityKind::IntraVisible).values);
    save_tensor(stem.string() + ".M_V_P.tnsr", pccl::pseudo_labels(reference.attention_last, options.gamma).values);
    save_tensor(stem.string() + ".M_V_A.tnsr", reference.attention_last);
  }
  log << "dumped matrices for " << count << " samples to " << options.out.string() << "\n";
}

}  // namespace univ::cli
