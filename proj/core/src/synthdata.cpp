#include "versnet/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "versnet/errors.hpp"
#include "versnet/image_io.hpp"

namespace versnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr float kClutter = 0.10f;
constexpr float kShadow = 0.015f;
constexpr float kTargetBody = 0.45f;
constexpr float kScatterer = 1.0f;
constexpr float kScattererHalo = 0.7f;
constexpr int kScatterers = 5;
constexpr double kShadowLength = 7.0;
constexpr int kFrontBand = 2;
const double kFrontCos = std::cos(std::numbers::pi / 4.0);

bool in_box(double u, double v, double u0, double u1, double half_v) {
  return u >= u0 && u <= u1 && std::fabs(v) <= half_v;
}

// Silhouettes in target-local coordinates at scale 1: u runs along the
// heading (front at +u), v across it. Lengths are about 30 px.
bool silhouette_contains(int class_id, double u, double v) {
  switch (class_id) {
    case 2:  // ellipse
      return (u / 16.0) * (u / 16.0) + (v / 8.0) * (v / 8.0) <= 1.0;
    case 3:  // box
      return in_box(u, v, -15, 15, 7);
    case 4:  // T with the crossbar at the front
      return in_box(u, v, 6, 12, 11) || in_box(u, v, -14, 6, 4);
    case 5:  // L
      return (u >= -14 && u <= 14 && v >= -8 && v <= -2) || (u >= 8 && u <= 14 && v >= -8 && v <= 8);
    case 6:  // hull with a wide round turret
      return in_box(u, v, -13, 13, 6) || u * u + v * v <= 64.0;
    case 7:  // hull with a long gun barrel
      return in_box(u, v, -14, 6, 7) || in_box(u, v, 6, 18, 1.5);
    case 8:  // cross
      return in_box(u, v, -14, 14, 3) || in_box(u, v, -3, 3, 11);
    case 9:  // arrowhead
      return u >= -12 && u <= 16 && std::fabs(v) <= 11.0 * (16.0 - u) / 28.0;
    case 10:  // truck: cab, neck, cargo bed
      return in_box(u, v, 9, 15, 5) || in_box(u, v, 6, 9, 2) || in_box(u, v, -15, 6, 7);
    case 11:  // twin hulls joined at the middle
      return (std::fabs(u) <= 13 && std::fabs(v) >= 3 && std::fabs(v) <= 8) || in_box(u, v, -4, 4, 3);
    default:
      throw InvalidArgument("no silhouette for class " + std::to_string(class_id));
  }
}

const std::array<double, kNumTargetClasses>& radius_table() {
  static const std::array<double, kNumTargetClasses> table = [] {
    std::array<double, kNumTargetClasses> t{};
    for (int c = kFirstTargetClass; c <= kLastTargetClass; ++c) {
      double r = 0.0;
      for (double u = -30.0; u <= 30.0; u += 0.25) {
        for (double v = -30.0; v <= 30.0; v += 0.25) {
          if (silhouette_contains(c, u, v)) r = std::max(r, std::hypot(u, v));
        }
      }
      t[static_cast<std::size_t>(c - kFirstTargetClass)] = r + 0.25;
    }
    return t;
  }();
  return table;
}

struct Rendered {
  Tensor reflectivity;  // 1 x S x S
  LabelImage label;
};

Rendered render_target(const TargetSpec& spec, int size, std::uint64_t seed) {
  if (!is_target_class(spec.class_id)) {
    throw InvalidArgument("target class must be in 2..11, got " + std::to_string(spec.class_id));
  }
  if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) throw InvalidArgument("target scale must be positive");
  const double radius = silhouette_radius(spec.class_id, spec.scale);
  if (spec.center_row - radius < 0.0 || spec.center_col - radius < 0.0 || spec.center_row + radius > size - 1 ||
      spec.center_col + radius > size - 1) {
    throw InvalidArgument("silhouette of class " + std::to_string(spec.class_id) + " (radius " +
                          std::to_string(radius) + ") does not fit in a " + std::to_string(size) +
                          " px canvas at (" + std::to_string(spec.center_row) + "," +
                          std::to_string(spec.center_col) + ")");
  }
  const auto n = static_cast<std::size_t>(size);
  const double theta = spec.pose_deg * std::numbers::pi / 180.0;
  const double fx = std::cos(theta), fy = -std::sin(theta);  // heading in (col, row)

  std::vector<std::uint8_t> mask(n * n, 0);
  double sum_r = 0.0, sum_c = 0.0;
  std::size_t area = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dx = static_cast<double>(c) - spec.center_col;
      const double dy = static_cast<double>(r) - spec.center_row;
      const double u = dx * fx + dy * fy;
      const double v = -dx * fy + dy * fx;
      if (silhouette_contains(spec.class_id, u / spec.scale, v / spec.scale)) {
        mask[r * n + c] = 1;
        sum_r += static_cast<double>(r);
        sum_c += static_cast<double>(c);
        ++area;
      }
    }
  }
  if (area == 0) throw InvalidArgument("silhouette covers no pixel; scale too small");
  const double cr = sum_r / static_cast<double>(area), cc = sum_c / static_cast<double>(area);

  auto masked = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    return r >= 0 && c >= 0 && r < static_cast<std::ptrdiff_t>(n) && c < static_cast<std::ptrdiff_t>(n) &&
           mask[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c)];
  };

  Rendered out{Tensor({1, n, n}, kClutter), LabelImage(n, n)};
  auto& label = out.label;
  for (std::size_t i = 0; i < n * n; ++i) {
    if (mask[i]) label[i] = static_cast<std::uint8_t>(spec.class_id);
  }

  // Front band: silhouette pixels near the outline, facing the heading.
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (!mask[r * n + c]) continue;
      const double dx = static_cast<double>(c) - cc, dy = static_cast<double>(r) - cr;
      const double len = std::hypot(dx, dy);
      if (len == 0.0 || (dx * fx + dy * fy) / len < kFrontCos) continue;
      bool edge = false;
      for (int a = -kFrontBand; a <= kFrontBand && !edge; ++a) {
        for (int b = -kFrontBand; b <= kFrontBand && !edge; ++b) {
          edge = !masked(static_cast<std::ptrdiff_t>(r) + a, static_cast<std::ptrdiff_t>(c) + b);
        }
      }
      if (edge) label.at(r, c) = kFrontClass;
    }
  }
  // Front pixels must touch a class pixel; thin protrusions fall back to the class.
  const LabelImage before = label;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (before.at(r, c) != kFrontClass) continue;
      bool touches = false;
      for (int a = -1; a <= 1 && !touches; ++a) {
        for (int b = -1; b <= 1 && !touches; ++b) {
          const auto rr = static_cast<std::ptrdiff_t>(r) + a, ccol = static_cast<std::ptrdiff_t>(c) + b;
          if (rr < 0 || ccol < 0 || rr >= static_cast<std::ptrdiff_t>(n) || ccol >= static_cast<std::ptrdiff_t>(n)) continue;
          touches = before.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(ccol)) == spec.class_id;
        }
      }
      if (!touches) label.at(r, c) = static_cast<std::uint8_t>(spec.class_id);
    }
  }

  // Shadow trails behind the target, opposite the heading.
  const int shadow_len = std::max(1, static_cast<int>(std::lround(kShadowLength * spec.scale)));
  Tensor& refl = out.reflectivity;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (mask[r * n + c]) {
        refl[r * n + c] = kTargetBody;
        continue;
      }
      for (int k = 1; k <= shadow_len; ++k) {
        const auto sr = static_cast<std::ptrdiff_t>(std::lround(static_cast<double>(r) + k * fy));
        const auto sc = static_cast<std::ptrdiff_t>(std::lround(static_cast<double>(c) + k * fx));
        if (masked(sr, sc)) {
          refl[r * n + c] = kShadow;
          break;
        }
      }
    }
  }

  // Point scatterers on the body.
  std::vector<std::size_t> body;
  for (std::size_t i = 0; i < n * n; ++i) {
    if (mask[i]) body.push_back(i);
  }
  Prng rng(mix_seed(seed, 2));
  for (int s = 0; s < kScatterers; ++s) {
    const std::size_t i = body[rng.below(body.size())];
    const std::size_t r = i / n, c = i % n;
    const std::ptrdiff_t nbr[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& d : nbr) {
      const auto rr = static_cast<std::ptrdiff_t>(r) + d[0], ccol = static_cast<std::ptrdiff_t>(c) + d[1];
      if (masked(rr, ccol)) {
        float& v = refl[static_cast<std::size_t>(rr) * n + static_cast<std::size_t>(ccol)];
        v = std::max(v, kScattererHalo);
      }
    }
    refl[i] = kScatterer;
  }
  return out;
}

void apply_speckle(Tensor& reflectivity, Prng& rng) {
  for (auto& v : reflectivity.data()) {
    v = std::clamp(static_cast<float>(v * rng.exponential()), 0.0f, 1.0f);
  }
}

}  // namespace

double silhouette_radius(int class_id, double scale) {
  if (!is_target_class(class_id)) throw InvalidArgument("no silhouette for class " + std::to_string(class_id));
  return radius_table()[static_cast<std::size_t>(class_id - kFirstTargetClass)] * scale;
}

Chip gen_chip(const TargetSpec& spec, int chip_size, std::uint64_t seed) {
  if (chip_size < kMinChipSize) {
    throw InvalidArgument("chip size must be >= " + std::to_string(kMinChipSize) + ", got " + std::to_string(chip_size));
  }
  Rendered r = render_target(spec, chip_size, seed);
  Prng speckle(mix_seed(seed, 1));
  apply_speckle(r.reflectivity, speckle);
  return Chip{SarImage(std::move(r.reflectivity)), std::move(r.label)};
}

// ---------------------------------------------------------------- mosaics

std::pair<int, int> footprint_origin(const Placement& p, int footprint) {
  return {static_cast<int>(std::floor(p.target.center_row)) - footprint / 2,
          static_cast<int>(std::floor(p.target.center_col)) - footprint / 2};
}

Chip compose_mosaic(const SceneSpec& scene) {
  if (scene.height < 1 || scene.width < 1) throw InvalidArgument("scene must be at least 1x1");
  if (scene.footprint < kMinChipSize) throw InvalidArgument("scene footprint must be >= 32");
  const auto h = static_cast<std::size_t>(scene.height), w = static_cast<std::size_t>(scene.width);
  const int fp = scene.footprint;
  std::vector<std::pair<int, int>> origins;
  for (std::size_t i = 0; i < scene.placements.size(); ++i) {
    const auto [r0, c0] = footprint_origin(scene.placements[i], fp);
    if (r0 < 0 || c0 < 0 || r0 + fp > scene.height || c0 + fp > scene.width) {
      throw InvalidArgument("placement " + std::to_string(i) + " footprint leaves the scene");
    }
    for (std::size_t j = 0; j < origins.size(); ++j) {
      const auto [r1, c1] = origins[j];
      if (r0 < r1 + fp && r1 < r0 + fp && c0 < c1 + fp && c1 < c0 + fp) {
        throw InvalidArgument("placements " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
      }
    }
    origins.emplace_back(r0, c0);
  }

  Tensor canvas({1, h, w}, kClutter);
  LabelImage truth(h, w);
  for (std::size_t i = 0; i < scene.placements.size(); ++i) {
    const auto& p = scene.placements[i];
    const auto [r0, c0] = origins[i];
    TargetSpec local = p.target;
    local.center_row -= r0;
    local.center_col -= c0;
    const Rendered r = render_target(local, fp, p.seed);
    const auto n = static_cast<std::size_t>(fp);
    for (std::size_t rr = 0; rr < n; ++rr) {
      for (std::size_t cc = 0; cc < n; ++cc) {
        const std::size_t sr = static_cast<std::size_t>(r0) + rr, sc = static_cast<std::size_t>(c0) + cc;
        canvas[sr * w + sc] = r.reflectivity[rr * n + cc];
        truth.at(sr, sc) = r.label.at(rr, cc);
      }
    }
  }
  Prng speckle(scene.noise_seed);
  apply_speckle(canvas, speckle);
  return Chip{SarImage(std::move(canvas)), std::move(truth)};
}

SceneSpec random_scene(int height, int width, int num_targets, int num_classes, std::uint64_t seed, int footprint) {
  if (num_classes < 1 || num_classes > kNumTargetClasses) throw InvalidArgument("num_classes must be in 1..10");
  if (num_targets < 0) throw InvalidArgument("num_targets must be >= 0");
  const int rows = height / footprint, cols = width / footprint;
  if (rows * cols < num_targets) {
    throw InvalidArgument("scene " + std::to_string(height) + "x" + std::to_string(width) + " holds at most " +
                          std::to_string(rows * cols) + " footprints");
  }
  Prng rng(seed);
  std::vector<int> cells(static_cast<std::size_t>(rows * cols));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  std::vector<int> classes(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) classes[static_cast<std::size_t>(c)] = kFirstTargetClass + c;
  for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[rng.below(i)]);

  SceneSpec scene{height, width, footprint, {}, mix_seed(seed, 7)};
  for (int t = 0; t < num_targets; ++t) {
    const int cell = cells[static_cast<std::size_t>(t)];
    Placement p;
    p.target.class_id = classes[static_cast<std::size_t>(t % num_classes)];
    p.target.pose_deg = rng.uniform(0.0, 360.0);
    p.target.scale = rng.uniform(0.9, 1.1);
    p.target.center_row = (cell / cols) * footprint + footprint / 2 + rng.uniform();
    p.target.center_col = (cell % cols) * footprint + footprint / 2 + rng.uniform();
    p.seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(t));
    scene.placements.push_back(p);
  }
  return scene;
}

std::string scene_to_json(const SceneSpec& scene) {
  json placements = json::array();
  for (const auto& p : scene.placements) {
    placements.push_back(json{{"class_id", p.target.class_id},
                              {"pose_deg", p.target.pose_deg},
                              {"scale", p.target.scale},
                              {"center_row", p.target.center_row},
                              {"center_col", p.target.center_col},
                              {"seed", p.seed}});
  }
  json j{{"height", scene.height},
         {"width", scene.width},
         {"footprint", scene.footprint},
         {"noise_seed", scene.noise_seed},
         {"placements", std::move(placements)}};
  return j.dump(2) + "\n";
}

SceneSpec scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scene JSON: ") + e.what(), e.byte);
  }
  try {
    SceneSpec s;
    s.height = j.at("height").get<int>();
    s.width = j.at("width").get<int>();
    s.footprint = j.value("footprint", kDefaultChipSize);
    s.noise_seed = j.value("noise_seed", std::uint64_t{0});
    for (const auto& pj : j.value("placements", json::array())) {
      Placement p;
      p.target.class_id = pj.at("class_id").get<int>();
      p.target.pose_deg = pj.value("pose_deg", 0.0);
      p.target.scale = pj.value("scale", 1.0);
      p.target.center_row = pj.at("center_row").get<double>();
      p.target.center_col = pj.at("center_col").get<double>();
      p.seed = pj.value("seed", std::uint64_t{0});
      s.placements.push_back(p);
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scene JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- datasets

DatasetManifest gen_dataset(int num_per_class, int chip_size, const std::string& split, std::uint64_t seed,
                            const fs::path& root, int num_classes) {
  if (num_per_class < 1) throw InvalidArgument("num_per_class must be >= 1");
  if (chip_size < kMinChipSize) {
    throw InvalidArgument("chip size must be >= " + std::to_string(kMinChipSize) + ", got " + std::to_string(chip_size));
  }
  if (num_classes < 1 || num_classes > kNumTargetClasses) throw InvalidArgument("num_classes must be in 1..10");
  if (split.empty()) throw InvalidArgument("split name must not be empty");

  DatasetManifest m;
  m.dir = root / split;
  m.split = split;
  m.chip_size = chip_size;
  m.seed = seed;
  std::error_code ec;
  fs::create_directories(m.dir, ec);
  if (ec) throw IoError("cannot create " + m.dir.string() + ": " + ec.message());

  // Silhouettes are sized for 64 px chips; other chip sizes rescale them.
  const double base_scale = chip_size / static_cast<double>(kDefaultChipSize);
  const double jitter = 3.0 * base_scale;
  for (int c = kFirstTargetClass; c < kFirstTargetClass + num_classes; ++c) {
    const std::string name = class_name(c, ClassNaming::Synthetic);
    fs::create_directories(m.dir / name, ec);
    if (ec) throw IoError("cannot create " + (m.dir / name).string() + ": " + ec.message());
    Prng class_rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    const double step = 360.0 / num_per_class;
    const double offset = class_rng.uniform(0.0, step);
    for (int k = 0; k < num_per_class; ++k) {
      TargetSpec spec;
      spec.class_id = c;
      spec.pose_deg = std::fmod(offset + k * step, 360.0);
      spec.scale = base_scale * class_rng.uniform(0.9, 1.1);
      spec.center_row = chip_size / 2.0 + class_rng.uniform(-jitter, jitter);
      spec.center_col = chip_size / 2.0 + class_rng.uniform(-jitter, jitter);
      const std::uint64_t chip_seed = mix_seed(seed, (static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint64_t>(k));
      const Chip chip = gen_chip(spec, chip_size, chip_seed);

      char id[32];
      std::snprintf(id, sizeof id, "%s_%05d", name.c_str(), k);
      ManifestEntry e{id, name + "/" + id + "_img.pgm", name + "/" + id + "_lbl.pgm", c, spec.pose_deg, chip_seed};
      save_image(chip.image, m.image_path(e).string());
      save_label(chip.label, m.label_path(e).string());
      m.entries.push_back(std::move(e));
    }
  }
  write_manifest(m);
  return m;
}

void write_manifest(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back(json{{"id", e.id},
                           {"image", e.image},
                           {"label", e.label},
                           {"class_id", e.class_id},
                           {"pose_deg", e.pose_deg},
                           {"seed", e.seed}});
  }
  json j{{"generator_version", m.generator_version},
         {"split", m.split},
         {"naming", naming_to_string(m.naming)},
         {"chip_size", m.chip_size},
         {"seed", m.seed},
         {"entries", std::move(entries)},
         {"exclusions", m.exclusions}};
  const fs::path path = m.dir / kManifestFile;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestFile : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what(), e.byte);
  }
  DatasetManifest m;
  m.dir = file.parent_path();
  try {
    m.generator_version = j.value("generator_version", std::string{});
    m.split = j.value("split", std::string{"train"});
    m.naming = naming_from_string(j.value("naming", std::string{"synthetic"}));
    m.chip_size = j.value("chip_size", kDefaultChipSize);
    m.seed = j.value("seed", std::uint64_t{0});
    m.exclusions = j.value("exclusions", std::vector<std::string>{});
    for (const auto& ej : j.at("entries")) {
      ManifestEntry e;
      e.id = ej.at("id").get<std::string>();
      e.image = ej.at("image").get<std::string>();
      e.label = ej.at("label").get<std::string>();
      e.class_id = ej.at("class_id").get<int>();
      e.pose_deg = ej.value("pose_deg", 0.0);
      e.seed = ej.value("seed", std::uint64_t{0});
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw SchemaError(file.string() + ": " + e.what());
  }
  if (!m.exclusions.empty()) m = apply_exclusions(m, m.exclusions).manifest;
  for (const auto& e : m.entries) {
    if (!is_target_class(e.class_id)) {
      throw SchemaError(file.string() + ": entry " + e.id + " has class " + std::to_string(e.class_id) +
                        " outside the target ids 2..11");
    }
    for (const fs::path& p : {m.image_path(e), m.label_path(e)}) {
      if (!fs::exists(p)) throw IoError("manifest " + file.string() + " lists missing file " + p.string());
    }
  }
  return m;
}

ExclusionResult apply_exclusions(const DatasetManifest& manifest, const std::vector<std::string>& ids) {
  ExclusionResult r{manifest, 0, 0};
  if (ids.empty()) return r;
  std::vector<bool> used(ids.size(), false);
  std::vector<ManifestEntry> kept;
  for (const auto& e : manifest.entries) {
    const std::string file = fs::path(e.image).filename().string();
    bool drop = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == e.id || ids[i] == file) {
        used[i] = true;
        drop = true;
      }
    }
    if (drop) {
      ++r.removed;
    } else {
      kept.push_back(e);
    }
  }
  r.manifest.entries = std::move(kept);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!used[i]) {
      ++r.unknown;
    } else if (std::find(r.manifest.exclusions.begin(), r.manifest.exclusions.end(), ids[i]) ==
               r.manifest.exclusions.end()) {
      r.manifest.exclusions.push_back(ids[i]);
    }
  }
  return r;
}

std::vector<std::string> read_exclusion_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open exclusion file " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    ids.push_back(line.substr(b, e - b + 1));
  }
  return ids;
}

}  // namespace versnet
