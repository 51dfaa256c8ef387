#include "univ/forgetting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "univ/error.hpp"

namespace univ::train {
namespace {

constexpr std::uint64_t kTeacherStream = 1;
constexpr std::uint64_t kPairsStream = 2;
constexpr std::uint64_t kProbeStream = 3;
constexpr double kOnePoint = 0.01;
constexpr double kSlack = 1e-12;

}  // namespace

TrainConfig default_forgetting_train() {
  TrainConfig t;
  t.epochs = 4;
  t.base_lr = 1e-3;
  return t;
}

std::string row_key(GridRow row) {
  switch (row) {
    case GridRow::FrozenBaseline:
      return "a";
    case GridRow::FullIv:
      return "b";
    case GridRow::FullIvVv:
      return "c";
    case GridRow::LoraIv:
      return "d";
    case GridRow::LoraIvVv:
      return "e";
  }
  return "?";
}

std::string row_description(GridRow row) {
  switch (row) {
    case GridRow::FrozenBaseline:
      return "frozen baseline";
    case GridRow::FullIv:
      return "L_IV, full tune";
    case GridRow::FullIvVv:
      return "L_IV + L_VV, full tune";
    case GridRow::LoraIv:
      return "L_IV, LoRA";
    case GridRow::LoraIvVv:
      return "L_IV + L_VV, LoRA";
  }
  return "";
}

TrainConfig row_train_config(const ForgettingConfig& cfg, GridRow row, std::uint64_t seed) {
  TrainConfig t = cfg.train;
  t.seed = seed;
  t.alpha = 1.0;
  t.beta = (row == GridRow::FullIvVv || row == GridRow::LoraIvVv) ? 1.0 : 0.0;
  if (row == GridRow::LoraIv || row == GridRow::LoraIvVv) {
    t.lora = cfg.lora;
  } else {
    t.lora.reset();
  }
  return t;
}

const RowResult& ForgettingReport::at(GridRow row) const {
  for (const auto& r : rows) {
    if (r.row == row) return r;
  }
  throw ConfigError("forgetting report has no row " + row_key(row));
}

ProbeScores run_row(const ForgettingConfig& cfg, GridRow row, std::uint64_t seed, std::size_t* trainable) {
  encoder::EncoderConfig enc = cfg.encoder;
  enc.seed = Rng::derive(seed, kTeacherStream);
  const Teacher teacher = make_teacher(enc);
  const auto probe_set = data::make_probe_set(cfg.task, cfg.probe_samples, Rng::derive(seed, kProbeStream));

  if (row == GridRow::FrozenBaseline) {
    if (trainable) *trainable = 0;
    return probe_encoder(probe_set, teacher.params, enc, nullptr, cfg.probe);
  }

  const TrainConfig tcfg = row_train_config(cfg, row, seed);
  const auto pairs = data::make_training_pairs(cfg.task, cfg.train_pairs, cfg.night_fraction,
                                               Rng::derive(seed, kPairsStream));
  TrainState state = init_state(teacher, tcfg);
  if (trainable) *trainable = state.student.trainable_count();
  run_training(state, pairs, teacher, tcfg);
  const lora::AdapterSet* adapters = state.student.adapters ? &*state.student.adapters : nullptr;
  return probe_encoder(probe_set, state.student.params, enc, adapters, cfg.probe);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ForgettingReport forgetting_experiment(const ForgettingConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("forgetting experiment needs at least one seed");
  ForgettingReport report;
  for (GridRow row : kGridRows) {
    RowResult result;
    result.row = row;
    std::vector<double> vis, ir;
    for (std::uint64_t seed : cfg.seeds) {
      std::size_t count = 0;
      const ProbeScores s = run_row(cfg, row, seed, &count);
      result.trainable_parameters = count;
      result.per_seed.push_back(s);
      vis.push_back(s.visible);
      ir.push_back(s.infrared);
    }
    result.visible_median = median(vis);
    result.infrared_median = median(ir);
    report.rows.push_back(std::move(result));
  }
  report.checks = check_orderings(report);
  return report;
}

OrderingChecks check_orderings(const ForgettingReport& report) {
  const RowResult& a = report.at(GridRow::FrozenBaseline);
  const RowResult& b = report.at(GridRow::FullIv);
  const RowResult& c = report.at(GridRow::FullIvVv);
  const RowResult& e = report.at(GridRow::LoraIvVv);
  OrderingChecks checks;
  checks.infrared_b_ge_a = b.infrared_median + kSlack >= a.infrared_median;
  checks.visible_c_ge_b = c.visible_median + kSlack >= b.visible_median;
  checks.visible_e_near_a = std::abs(e.visible_median - a.visible_median) <= kOnePoint + kSlack;
  checks.infrared_e_ge_a = e.infrared_median + kSlack >= a.infrared_median;
  return checks;
}

std::string format_report(const ForgettingReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-24s %10s %10s %10s\n", "row", "configuration", "visible", "infrared",
                "trainable");
  os << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line, "(%s)  %-24s %10.4f %10.4f %10zu\n", row_key(r.row).c_str(),
                  row_description(r.row).c_str(), r.visible_median, r.infrared_median, r.trainable_parameters);
    os << line;
  }
  return os.str();
}

}  // namespace univ::train
