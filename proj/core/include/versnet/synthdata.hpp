#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/metrics.hpp"
#include "versnet/network.hpp"

namespace versnet {

inline constexpr int kMinChipSize = 32;
inline constexpr int kDefaultChipSize = 64;
inline constexpr const char* kGeneratorVersion = "versnet-synth-1";

/// One target instance. Pose is the heading in degrees, counter-clockwise
/// from the +column axis (0 = facing right, 90 = facing up). The center is in
/// the pixel coordinates of whatever canvas the target is drawn on.
struct TargetSpec {
  int class_id = kFirstTargetClass;
  double pose_deg = 0.0;
  double scale = 1.0;
  double center_row = kDefaultChipSize / 2.0;
  double center_col = kDefaultChipSize / 2.0;
};

struct Chip {
  SarImage image;
  LabelImage label;
};

/// Renders one target chip: clutter, bright silhouette with point
/// scatterers, a shadow trailing opposite the heading, all multiplied by
/// unit-mean exponential speckle and clamped to [0, 1]. The label marks the
/// silhouette with class_id and a 2-pixel boundary band within +-45 degrees of
/// the heading as the front class; shadow stays background.
Chip gen_chip(const TargetSpec& spec, int chip_size, std::uint64_t seed);

/// Radius (pixels) of the circle enclosing the silhouette at the given scale.
double silhouette_radius(int class_id, double scale);

struct Placement {
  TargetSpec target;  // center in scene coordinates
  std::uint64_t seed = 0;
};

struct SceneSpec {
  int height = 512;
  int width = 512;
  int footprint = kDefaultChipSize;  // square region reserved per target
  std::vector<Placement> placements;
  std::uint64_t noise_seed = 0;
};

/// Top-left corner (row, col) of a placement's footprint.
std::pair<int, int> footprint_origin(const Placement& p, int footprint);

/// Scene image plus ground truth. Footprints must be in bounds and disjoint.
Chip compose_mosaic(const SceneSpec& scene);

/// Random scene with num_targets targets on a footprint-sized grid, cycling
/// through num_classes classes so each class appears.
SceneSpec random_scene(int height, int width, int num_targets, int num_classes, std::uint64_t seed,
                       int footprint = kDefaultChipSize);

std::string scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const std::string& json);

struct ManifestEntry {
  std::string id;
  std::string image;  // relative to the manifest directory
  std::string label;
  int class_id = kFirstTargetClass;
  double pose_deg = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path dir;  // directory holding manifest.json
  std::string split = "train";
  ClassNaming naming = ClassNaming::Synthetic;
  int chip_size = kDefaultChipSize;
  std::uint64_t seed = 0;
  std::string generator_version = kGeneratorVersion;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> exclusions;

  std::filesystem::path image_path(const ManifestEntry& e) const { return dir / e.image; }
  std::filesystem::path label_path(const ManifestEntry& e) const { return dir / e.label; }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Writes numPerClass chips for each of the first num_classes target classes
/// into root/split/<class>/ and returns the manifest (also written).
DatasetManifest gen_dataset(int num_per_class, int chip_size, const std::string& split, std::uint64_t seed,
                            const std::filesystem::path& root, int num_classes = kNumTargetClasses);

void write_manifest(const DatasetManifest& manifest);

/// Accepts a manifest file or a directory containing manifest.json. Entries
/// listed as excluded are dropped; every remaining file must exist.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct ExclusionResult {
  DatasetManifest manifest;
  std::size_t removed = 0;
  std::size_t unknown = 0;  // ids that matched nothing
};

/// Removes entries whose id (or image file name) matches any of ids.
ExclusionResult apply_exclusions(const DatasetManifest& manifest, const std::vector<std::string>& ids);

/// One identifier per line; blank lines and '#' comments ignored.
std::vector<std::string> read_exclusion_file(const std::filesystem::path& path);

}  // namespace versnet
