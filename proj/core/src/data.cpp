#include "univ/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "univ/error.hpp"
#include "univ/image_io.hpp"

namespace univ::data {
namespace {

bool covers(const SceneObject& o, double px, double py) {
  if (o.kind == ShapeKind::Rectangle) return std::abs(px - o.cx) <= o.size && std::abs(py - o.cy) <= o.size;
  const double dx = px - o.cx, dy = py - o.cy;
  return dx * dx + dy * dy <= o.size * o.size;
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

SceneSpec base_spec(const SyntheticTask& task) {
  SceneSpec spec;
  spec.width = spec.height = task.image_size;
  spec.class_colors = task.class_colors;
  spec.class_heat = task.class_heat;
  spec.visible_texture_noise = task.visible_texture_noise;
  spec.visible_sensor_noise = task.visible_sensor_noise;
  spec.infrared_noise = task.infrared_noise;
  return spec;
}

SceneObject random_object(const SyntheticTask& task, Rng& rng, std::size_t cls, double min_size, double max_size) {
  SceneObject o;
  o.kind = rng.bernoulli(0.5) ? ShapeKind::Rectangle : ShapeKind::Disk;
  o.cls = cls;
  const double extent = static_cast<double>(task.image_size);
  if (!(min_size > 0.0 && min_size <= max_size) || 2.0 * max_size > extent) {
    throw ConfigError("object sizes [" + std::to_string(min_size) + ", " + std::to_string(max_size) +
                      "] do not fit a " + std::to_string(task.image_size) + "-pixel image");
  }
  o.size = rng.uniform(min_size, max_size);
  o.cx = rng.uniform(o.size, extent - o.size);
  o.cy = rng.uniform(o.size, extent - o.size);
  return o;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, '\t');) fields.push_back(f);
  return fields;
}

}  // namespace

void SceneSpec::validate() const {
  if (width == 0 || height == 0) throw ConfigError("scene must have positive size");
  if (class_colors.size() != class_heat.size()) throw ConfigError("class colour and heat tables differ in length");
  for (const auto& c : class_colors) {
    if (!in_unit(c[0]) || !in_unit(c[1]) || !in_unit(c[2])) throw ConfigError("class colours must lie in [0, 1]");
  }
  for (double h : class_heat) {
    if (!in_unit(h)) throw ConfigError("heat intensities must lie in [0, 1]");
  }
  if (!in_unit(background_heat)) throw ConfigError("background heat must lie in [0, 1]");
  if (!in_unit(illumination)) throw ConfigError("illumination must lie in [0, 1]");
  if (visible_texture_noise < 0 || visible_sensor_noise < 0 || infrared_noise < 0) {
    throw ConfigError("noise levels must be non-negative");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.cls >= class_colors.size()) throw ConfigError("object " + std::to_string(i) + " has unknown class");
    if (!(o.size > 0.0) || o.cx - o.size < 0.0 || o.cy - o.size < 0.0 ||
        o.cx + o.size > static_cast<double>(width) || o.cy + o.size > static_cast<double>(height)) {
      throw ConfigError("object " + std::to_string(i) + " lies outside the image bounds");
    }
  }
}

PairedSample gen_scene(const SceneSpec& spec, std::uint64_t seed, std::string scene_id) {
  spec.validate();
  const std::size_t w = spec.width, h = spec.height;
  Rng visible_rng(Rng::derive(seed, 1));
  Rng infrared_rng(Rng::derive(seed, 2));
  Tensor visible({3, h, w});
  Tensor infrared({1, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      Rgb color = spec.background_color;
      double heat = spec.background_heat;
      for (const auto& o : spec.objects) {
        if (covers(o, px, py)) {
          color = spec.class_colors[o.cls];
          heat = spec.class_heat[o.cls];
        }
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double texture = spec.visible_texture_noise > 0 ? visible_rng.normal() * spec.visible_texture_noise : 0.0;
        const double floor = spec.visible_sensor_noise > 0 ? std::abs(visible_rng.normal()) * spec.visible_sensor_noise : 0.0;
        visible[(c * h + y) * w + x] = std::clamp(spec.illumination * (color[c] + texture) + floor, 0.0, 1.0);
      }
      const double noise = spec.infrared_noise > 0 ? infrared_rng.normal() * spec.infrared_noise : 0.0;
      infrared[y * w + x] = std::clamp(heat + noise, 0.0, 1.0);
    }
  }
  return PairedSample{std::move(visible), std::move(infrared), std::move(scene_id), "synthetic"};
}

SyntheticTask synthetic_task(std::size_t image_size) {
  SyntheticTask t;
  const double scale = static_cast<double>(image_size) / static_cast<double>(t.image_size);
  t.image_size = image_size;
  t.min_size *= scale;
  t.max_size *= scale;
  return t;
}

SceneSpec sample_scene(const SyntheticTask& task, Rng& rng, bool night) {
  SceneSpec spec = base_spec(task);
  spec.illumination = night ? task.night_illumination : 1.0;
  const std::size_t count = task.min_objects + rng.below(task.max_objects - task.min_objects + 1);
  for (std::size_t i = 0; i < count; ++i) {
    spec.objects.push_back(random_object(task, rng, rng.below(task.num_classes()), task.min_size, task.max_size));
  }
  return spec;
}

SceneSpec sample_labeled_scene(const SyntheticTask& task, Rng& rng, std::size_t cls) {
  SceneSpec spec = base_spec(task);
  spec.objects.push_back(random_object(task, rng, cls, task.min_size, task.max_size));
  return spec;
}

std::vector<LabeledSample> make_probe_set(const SyntheticTask& task, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % task.num_classes();
    SceneSpec spec = sample_labeled_scene(task, rng, cls);
    out.push_back({gen_scene(spec, rng.next(), "probe_" + std::to_string(i)), cls});
  }
  return out;
}

bool is_night_index(std::size_t index, double night_fraction) {
  const double i = static_cast<double>(index);
  return std::floor((i + 1.0) * night_fraction) > std::floor(i * night_fraction);
}

std::vector<PairedSample> make_training_pairs(const SyntheticTask& task, std::size_t count, double night_fraction,
                                              std::uint64_t seed) {
  if (!(night_fraction >= 0.0 && night_fraction <= 1.0)) throw ConfigError("night fraction must lie in [0, 1]");
  Rng rng(seed);
  std::vector<PairedSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const bool night = is_night_index(i, night_fraction);
    SceneSpec spec = sample_scene(task, rng, night);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05zu_%s", i, night ? "night" : "day");
    out.push_back(gen_scene(spec, rng.next(), id));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2]), fields[3]});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& e : entries) {
    os << e.scene_id << '\t' << e.visible.generic_string() << '\t' << e.infrared.generic_string() << '\t'
       << e.sequence_id << '\n';
  }
  if (!os) throw DataError("write failed for " + path.string());
}

PairedSample load_pair(const ManifestEntry& entry) {
  if (!std::filesystem::exists(entry.visible)) {
    throw DataError("pair '" + entry.scene_id + "': missing visible file " + entry.visible.string());
  }
  if (!std::filesystem::exists(entry.infrared)) {
    throw DataError("pair '" + entry.scene_id + "': missing infrared file " + entry.infrared.string());
  }
  const Image8 vis = read_pnm(entry.visible);
  const Image8 ir = read_pnm(entry.infrared);
  if (vis.channels != 3) throw DataError("pair '" + entry.scene_id + "': visible image must be PPM (P6)");
  if (ir.channels != 1) throw DataError("pair '" + entry.scene_id + "': infrared image must be PGM (P5)");
  if (vis.width != ir.width || vis.height != ir.height) {
    throw DataError("pair '" + entry.scene_id + "': alignment mismatch, visible " + std::to_string(vis.width) + "x" +
                    std::to_string(vis.height) + " vs infrared " + std::to_string(ir.width) + "x" +
                    std::to_string(ir.height));
  }
  return PairedSample{to_tensor(vis), to_tensor(ir), entry.scene_id, entry.visible.string()};
}

PairReader::PairReader(const std::filesystem::path& manifest) : entries_(read_manifest(manifest)) {}

PairReader::PairReader(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {}

std::optional<PairedSample> PairReader::next() {
  if (cursor_ >= entries_.size()) return std::nullopt;
  return load_pair(entries_[cursor_++]);
}

std::vector<PairedSample> load_pairs(const std::filesystem::path& manifest) {
  PairReader reader(manifest);
  std::vector<PairedSample> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

std::vector<ManifestEntry> downsample_frames(std::span<const ManifestEntry> entries, std::size_t stride) {
  if (stride == 0) throw ConfigError("downsample stride must be at least 1");
  std::map<std::string, std::size_t> seen;
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (seen[e.sequence_id]++ % stride == 0) out.push_back(e);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, epoch));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<PairedSample>> make_batches(std::span<const PairedSample> samples, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  std::vector<std::vector<PairedSample>> out;
  for (const auto& idx : batch_indices(samples.size(), batch_size, seed, epoch)) {
    auto& batch = out.emplace_back();
    for (auto i : idx) batch.push_back(samples[i]);
  }
  return out;
}

}  // namespace univ::data
