#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "univ/rng.hpp"
#include "univ/tensor.hpp"

namespace univ::data {

/// Pixel-aligned visible/infrared pair. Visible is [C×H×W], infrared [1×H×W], both in [0, 1].
struct PairedSample {
  Tensor visible;
  Tensor infrared;
  std::string scene_id;
  std::string source;
};

enum class ShapeKind { Rectangle, Disk };

struct SceneObject {
  ShapeKind kind = ShapeKind::Rectangle;
  double cx = 0.0;    // centre, pixels
  double cy = 0.0;
  double size = 1.0;  // half-width or radius, pixels
  std::size_t cls = 0;
};

using Rgb = std::array<double, 3>;

/// Geometry rendered twice: once as colour (visible), once as heat (infrared).
struct SceneSpec {
  std::size_t width = 16;
  std::size_t height = 16;
  std::vector<SceneObject> objects;  // later objects paint over earlier ones
  std::vector<Rgb> class_colors;
  std::vector<double> class_heat;
  Rgb background_color{0.45, 0.45, 0.45};
  double background_heat = 0.15;
  /// Per-pixel colour texture, scaled by illumination with the scene.
  double visible_texture_noise = 0.0;
  /// Additive sensor floor (absolute Gaussian) that illumination does not scale.
  double visible_sensor_noise = 0.0;
  double infrared_noise = 0.0;
  /// 1 for day, near 0 for night. Infrared ignores it.
  double illumination = 1.0;

  void validate() const;
};

/// Deterministic per seed. Visible = clamp(illumination·(colour + texture) + floor);
/// infrared = clamp(heat + noise) from an independent noise stream.
PairedSample gen_scene(const SceneSpec& spec, std::uint64_t seed, std::string scene_id = "scene");

/// Default palette and sampling ranges for the built-in synthetic task.
struct SyntheticTask {
  std::size_t image_size = 16;
  std::vector<Rgb> class_colors{{0.90, 0.15, 0.15}, {0.15, 0.80, 0.25}, {0.20, 0.30, 0.95}, {0.95, 0.85, 0.15}};
  std::vector<double> class_heat{0.95, 0.70, 0.45, 0.25};
  std::size_t min_objects = 2;
  std::size_t max_objects = 4;
  double min_size = 2.0;
  double max_size = 4.5;
  double visible_texture_noise = 0.04;
  double visible_sensor_noise = 0.01;
  double infrared_noise = 0.04;
  double night_illumination = 0.1;

  std::size_t num_classes() const { return class_colors.size(); }
};

/// Default task with object sizes scaled from the 16-pixel defaults.
SyntheticTask synthetic_task(std::size_t image_size);

/// Multi-object scene with random geometry.
SceneSpec sample_scene(const SyntheticTask& task, Rng& rng, bool night);

/// One object of class `cls` on the background (for probing).
SceneSpec sample_labeled_scene(const SyntheticTask& task, Rng& rng, std::size_t cls);

struct LabeledSample {
  PairedSample pair;
  std::size_t label = 0;
};

/// Balanced labelled set: sample i has label i mod num_classes.
std::vector<LabeledSample> make_probe_set(const SyntheticTask& task, std::size_t count, std::uint64_t seed);

/// Training pairs; the first floor(count·night_fraction) positions in a spread pattern are night scenes.
std::vector<PairedSample> make_training_pairs(const SyntheticTask& task, std::size_t count, double night_fraction,
                                              std::uint64_t seed);

/// True if scene index i of n is rendered at night for the given fraction.
bool is_night_index(std::size_t index, double night_fraction);

// --- manifests -------------------------------------------------------------

/// One line per pair: scene_id \t visible_path \t infrared_path \t sequence_id.
struct ManifestEntry {
  std::string scene_id;
  std::filesystem::path visible;
  std::filesystem::path infrared;
  std::string sequence_id;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Relative image paths are resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
/// Paths are written as given.
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

/// Streams pairs in manifest order, decoding PPM (visible) and PGM (infrared).
class PairReader {
 public:
  explicit PairReader(const std::filesystem::path& manifest);
  explicit PairReader(std::vector<ManifestEntry> entries);

  /// Next pair, or nullopt at end. Throws DataError on missing files, bad
  /// headers, or visible/infrared resolution mismatch (naming the scene).
  std::optional<PairedSample> next();

 private:
  std::vector<ManifestEntry> entries_;
  std::size_t cursor_ = 0;
};

std::vector<PairedSample> load_pairs(const std::filesystem::path& manifest);

/// Decodes one entry.
PairedSample load_pair(const ManifestEntry& entry);

/// Keeps entries at positions 0, stride, 2·stride, ... within each sequence_id group,
/// preserving manifest order. Throws ConfigError for stride 0.
std::vector<ManifestEntry> downsample_frames(std::span<const ManifestEntry> entries, std::size_t stride);

/// Index batches for one epoch: seeded shuffle, final partial batch kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

std::vector<std::vector<PairedSample>> make_batches(std::span<const PairedSample> samples, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch = 0);

}  // namespace univ::data
