#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/probe.hpp"
#include "univ/training.hpp"

// Five-row grid: a frozen baseline and four student configurations that differ
// in whether the visible preservation term is on and whether the student is
// fully tuned or LoRA-adapted. Each row is probed on both modalities.

namespace univ::train {

enum class GridRow { FrozenBaseline, FullIv, FullIvVv, LoraIv, LoraIvVv };

inline constexpr std::array<GridRow, 5> kGridRows{GridRow::FrozenBaseline, GridRow::FullIv, GridRow::FullIvVv,
                                                  GridRow::LoraIv, GridRow::LoraIvVv};

/// "a".."e".
std::string row_key(GridRow row);
std::string row_description(GridRow row);

/// Four epochs at lr 1e-3: long enough for the student to move at toy scale.
TrainConfig default_forgetting_train();

struct ForgettingConfig {
  encoder::EncoderConfig encoder;
  /// Shared by every trained row; alpha is forced to 1, beta to 0 or 1, and
  /// lora to `lora` or nothing depending on the row.
  TrainConfig train = default_forgetting_train();
  lora::LoraConfig lora;
  data::SyntheticTask task;
  std::size_t train_pairs = 64;
  double night_fraction = 0.5;
  std::size_t probe_samples = 400;
  ProbeOptions probe;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

/// Row-specific training configuration.
TrainConfig row_train_config(const ForgettingConfig& cfg, GridRow row, std::uint64_t seed);

struct RowResult {
  GridRow row = GridRow::FrozenBaseline;
  std::vector<ProbeScores> per_seed;
  double visible_median = 0.0;
  double infrared_median = 0.0;
  std::size_t trainable_parameters = 0;
};

struct OrderingChecks {
  bool infrared_b_ge_a = false;
  bool visible_c_ge_b = false;
  bool visible_e_near_a = false;  // within one accuracy point
  bool infrared_e_ge_a = false;

  bool all() const { return infrared_b_ge_a && visible_c_ge_b && visible_e_near_a && infrared_e_ge_a; }
};

struct ForgettingReport {
  std::vector<RowResult> rows;  // in kGridRows order
  OrderingChecks checks;

  const RowResult& at(GridRow row) const;
};

/// One seed of one row: fresh teacher, training set and probe set from `seed`.
ProbeScores run_row(const ForgettingConfig& cfg, GridRow row, std::uint64_t seed, std::size_t* trainable = nullptr);

ForgettingReport forgetting_experiment(const ForgettingConfig& cfg);

OrderingChecks check_orderings(const ForgettingReport& report);

double median(std::vector<double> values);

/// Plain-text table, one line per row.
std::string format_report(const ForgettingReport& report);

}  // namespace univ::train
