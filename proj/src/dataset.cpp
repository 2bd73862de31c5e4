#include "clude/dataset.hpp"

#include "clude/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace clude {
namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "clude-manifest v1";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

Manifest write_dataset(const RunConfig& cfg, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("synth: cannot create directory " + dir.string());
  Manifest m;
  m.scene = cfg.scene;
  m.root = dir;
  for (Index i = 0; i < cfg.data.scenes; ++i) {
    ManifestEntry e;
    e.index = i;
    e.seed = scene_seed(cfg.seed, i);
    e.test = i >= cfg.data.scenes - cfg.data.test_scenes;
    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%04lld", static_cast<long long>(i));
    e.gt = std::string(stem) + "_gt.png";
    e.rgb = std::string(stem) + "_rgb.png";
    e.labels = std::string(stem) + "_labels.png";
    const SceneSample s = synth_scene(cfg.scene, e.seed);
    save_depth_png(dir / e.gt, s.gt);
    save_rgb_png(dir / e.rgb, s.rgb);
    save_label_png(dir / e.labels, s.labels);
    m.entries.push_back(e);
  }
  write_manifest(m, dir / kManifestName);
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[256];
  out << kMagic << "\n";
  std::snprintf(buf, sizeof(buf), "scene=%lld,%lld,%.17g,%.17g,%d,%.17g,%.17g\n", static_cast<long long>(m.scene.height),
                static_cast<long long>(m.scene.width), m.scene.range.d_min, m.scene.range.d_max, m.scene.objects,
                m.scene.density, m.scene.outlier_rate);
  out << buf;
  out << "index,seed,split,gt,rgb,labels\n";
  for (const ManifestEntry& e : m.entries) {
    out << e.index << ',' << e.seed << ',' << (e.test ? "test" : "train") << ',' << e.gt << ',' << e.rgb << ','
        << e.labels << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot read manifest " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw FormatError(file.string() + ": not a dataset manifest");
  Manifest m;
  m.root = file.parent_path();
  if (!std::getline(in, line) || !line.starts_with("scene=")) throw FormatError(file.string() + ": missing scene line");
  const auto sc = split_csv(line.substr(6));
  if (sc.size() != 7) throw FormatError(file.string() + ": malformed scene line");
  try {
    m.scene.height = std::stoll(sc[0]);
    m.scene.width = std::stoll(sc[1]);
    m.scene.range = {std::stod(sc[2]), std::stod(sc[3])};
    m.scene.objects = std::stoi(sc[4]);
    m.scene.density = std::stod(sc[5]);
    m.scene.outlier_rate = std::stod(sc[6]);
  } catch (const std::exception&) {
    throw FormatError(file.string() + ": malformed scene line");
  }
  std::getline(in, line);
  int n = 3;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 6 || (c[2] != "train" && c[2] != "test")) {
      throw FormatError(file.string() + ": malformed entry on line " + std::to_string(n));
    }
    ManifestEntry e;
    try {
      e.index = std::stoll(c[0]);
      e.seed = std::stoull(c[1]);
    } catch (const std::exception&) {
      throw FormatError(file.string() + ": malformed entry on line " + std::to_string(n));
    }
    e.test = c[2] == "test";
    e.gt = c[3];
    e.rgb = c[4];
    e.labels = c[5];
    m.entries.push_back(e);
  }
  if (m.entries.empty()) throw FormatError(file.string() + ": manifest lists no scenes");
  return m;
}

SceneSample load_scene(const Manifest& m, const ManifestEntry& e) {
  SceneSample s;
  s.gt = load_depth_png(m.root / e.gt).depth;
  s.rgb = load_rgb_png(m.root / e.rgb);
  s.labels = load_label_png(m.root / e.labels);
  if (s.rgb.height() != s.gt.rows() || s.rgb.width() != s.gt.cols() || s.labels.rows() != s.gt.rows() ||
      s.labels.cols() != s.gt.cols()) {
    throw IoError("scene " + std::to_string(e.index) + ": image sizes disagree");
  }
  s.sparse = scene_sparse(s.gt, s.labels, m.scene, e.seed);
  return s;
}

std::vector<SceneSample> load_split(const Manifest& m, bool test) {
  std::vector<SceneSample> out;
  for (const ManifestEntry& e : m.entries)
    if (e.test == test) out.push_back(load_scene(m, e));
  return out;
}

}  // namespace clude
