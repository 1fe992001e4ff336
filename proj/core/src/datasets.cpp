#include "tgseg/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "tgseg/image_io.hpp"
#include "tgseg/rng.hpp"

#ifndef TGSEG_DATA_DIR
#define TGSEG_DATA_DIR "share/tgseg"
#endif
#ifndef TGSEG_INSTALL_DATA_DIR
#define TGSEG_INSTALL_DATA_DIR TGSEG_DATA_DIR
#endif

namespace fs = std::filesystem;

namespace tgseg {

std::string_view dataset_kind_name(DatasetKind kind) noexcept {
  switch (kind) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::thinobject5k: return "ThinObject5K";
    case DatasetKind::dis5k: return "DIS5K";
    case DatasetKind::big: return "BIG";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "synthetic") return DatasetKind::synthetic;
  if (n == "thinobject5k") return DatasetKind::thinobject5k;
  if (n == "dis5k") return DatasetKind::dis5k;
  if (n == "big") return DatasetKind::big;
  throw Error(ErrorCode::configuration,
              "unknown dataset kind '" + std::string(name) + "' (expected synthetic, ThinObject5K, DIS5K or BIG)");
}

std::string_view split_name(Split split) noexcept { return split == Split::train ? "train" : "val"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  throw Error(ErrorCode::configuration, "unknown split '" + std::string(name) + "' (expected train or val)");
}

std::size_t DatasetManifest::count(Split split) const noexcept {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const SampleRecord& r) { return r.split == split; }));
}

namespace {

std::string stem_of(std::string_view path) {
  const auto slash = path.find_last_of("/\\");
  std::string_view name = slash == std::string_view::npos ? path : path.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot != std::string_view::npos && dot > 0) name = name.substr(0, dot);
  return std::string(name);
}

std::string tokenize_prompt(std::string_view stem, std::string_view source) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : stem) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    } else {
      flush();
    }
  }
  flush();
  std::string out;
  for (const std::string& t : tokens) {
    if (std::isdigit(static_cast<unsigned char>(t.front()))) break;
    std::string word;
    for (char ch : t) {
      if (std::isalpha(static_cast<unsigned char>(ch))) word.push_back(static_cast<char>(std::tolower(ch)));
    }
    if (word.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  if (out.empty()) {
    throw Error(ErrorCode::unextractable_prompt, "no alphabetic category in file name '" + std::string(source) + "'");
  }
  return out;
}

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && has_image_extension(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_mask(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG"}) {
    fs::path p = dir / (stem + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

std::string relative_string(const fs::path& p, const fs::path& base) {
  return fs::weakly_canonical(p).lexically_relative(fs::weakly_canonical(base)).generic_string();
}

struct Candidate {
  fs::path image;
  std::optional<fs::path> mask;
  std::string id;
  Split split;
};

std::vector<std::string> read_list(const fs::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) out.push_back(stem_of(line));
  }
  return out;
}

std::vector<Candidate> scan(const fs::path& root, DatasetKind kind, DatasetManifest& m) {
  std::vector<Candidate> out;
  switch (kind) {
    case DatasetKind::synthetic:
    case DatasetKind::thinobject5k: {
      std::set<std::string> val;
      bool listed = false;
      std::set<std::string> train;
      if (kind == DatasetKind::thinobject5k) {
        const fs::path lists = root / "list";
        for (const char* name : {"test.txt", "val.txt"}) {
          if (fs::is_regular_file(lists / name)) {
            listed = true;
            for (auto& s : read_list(lists / name)) val.insert(s);
          }
        }
        if (fs::is_regular_file(lists / "train.txt")) {
          listed = true;
          for (auto& s : read_list(lists / "train.txt")) train.insert(s);
        }
      }
      for (const fs::path& img : list_images(root / "images")) {
        const std::string stem = img.stem().string();
        Split split = Split::train;
        if (listed) {
          if (val.count(stem)) {
            split = Split::val;
          } else if (!train.count(stem)) {
            m.excluded.push_back({img.generic_string(), "not listed in any split file"});
            continue;
          }
        }
        out.push_back({img, find_mask(root / "masks", stem), stem, split});
      }
      break;
    }
    case DatasetKind::dis5k: {
      for (auto [dir, split] : {std::pair{"DIS-TR", Split::train}, std::pair{"DIS-VD", Split::val}}) {
        for (const fs::path& img : list_images(root / dir / "im")) {
          const std::string stem = img.stem().string();
          out.push_back({img, find_mask(root / dir / "gt", stem), stem, split});
        }
      }
      break;
    }
    case DatasetKind::big: {
      for (auto [dir, split] : {std::pair{"train", Split::train}, std::pair{"val", Split::val},
                                std::pair{"test", Split::val}}) {
        for (const fs::path& img : list_images(root / dir)) {
          const std::string stem = img.stem().string();
          if (stem.size() < 4 || stem.substr(stem.size() - 3) != "_im") continue;
          const std::string base = stem.substr(0, stem.size() - 3);
          out.push_back({img, find_mask(root / dir, base + "_gt"), base, split});
        }
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::string prompt_from_filename(std::string_view path) { return tokenize_prompt(stem_of(path), path); }

std::string prompt_from_dis5k_name(std::string_view path) {
  const std::string stem = stem_of(path);
  std::vector<std::string> fields;
  std::stringstream ss(stem);
  std::string f;
  while (std::getline(ss, f, '#')) fields.push_back(f);
  if (fields.size() >= 5) return tokenize_prompt(fields[3], path);
  return tokenize_prompt(stem, path);
}

fs::path default_dis5k_exclusions() {
  if (const char* dir = std::getenv("TGSEG_DATA_DIR")) return fs::path(dir) / "dis5k_exclusions.txt";
  const fs::path built_in = fs::path(TGSEG_DATA_DIR) / "dis5k_exclusions.txt";
  if (fs::exists(built_in)) return built_in;
  return fs::path(TGSEG_INSTALL_DATA_DIR) / "dis5k_exclusions.txt";
}

std::vector<std::string> read_exclusion_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "exclusion list not found: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line = line.substr(start);
    if (line.empty() || line.front() == '#') continue;
    out.push_back(stem_of(line));
  }
  return out;
}

DatasetManifest build_manifest(const fs::path& root, DatasetKind kind, const std::optional<fs::path>& exclusions) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::not_found, "dataset root not found: " + root.string());
  DatasetManifest m;
  m.kind = kind;
  m.base = root;
  std::set<std::string> excluded_stems;
  std::optional<fs::path> list = exclusions;
  if (!list && kind == DatasetKind::dis5k) list = default_dis5k_exclusions();
  if (list) {
    for (auto& s : read_exclusion_list(*list)) excluded_stems.insert(s);
    m.notes.push_back("exclusion list " + list->generic_string() + " (" + std::to_string(excluded_stems.size()) +
                      " entries)");
  }

  std::vector<Candidate> candidates = scan(root, kind, m);
  std::size_t source_train = 0, source_val = 0;
  for (const Candidate& c : candidates) (c.split == Split::train ? source_train : source_val)++;

  for (const Candidate& c : candidates) {
    const std::string shown = c.image.generic_string();
    if (excluded_stems.count(c.id)) {
      m.excluded.push_back({shown, "on exclusion list"});
      continue;
    }
    if (!c.mask) {
      m.excluded.push_back({shown, "missing mask"});
      continue;
    }
    SampleRecord r;
    try {
      r.prompt = kind == DatasetKind::dis5k ? prompt_from_dis5k_name(c.id) : prompt_from_filename(c.id);
    } catch (const Error& e) {
      m.excluded.push_back({shown, e.what()});
      continue;
    }
    r.id = c.id;
    r.image = relative_string(c.image, root);
    r.mask = relative_string(*c.mask, root);
    r.split = c.split;
    r.dataset = kind;
    m.samples.push_back(std::move(r));
  }
  std::sort(m.samples.begin(), m.samples.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return std::tie(a.split, a.id) < std::tie(b.split, b.id);
  });
  m.notes.push_back("source " + std::to_string(source_train) + " train / " + std::to_string(source_val) + " val");
  m.notes.push_back("kept " + std::to_string(m.count(Split::train)) + " train / " +
                    std::to_string(m.count(Split::val)) + " val; excluded " + std::to_string(m.excluded.size()));
  if (m.samples.empty()) {
    throw Error(ErrorCode::empty_manifest, "no usable samples under " + root.string());
  }
  if (kind == DatasetKind::dis5k && source_train == kDis5kSourceTrain && source_val == kDis5kSourceVal &&
      (m.count(Split::train) != kDis5kFilteredTrain || m.count(Split::val) != kDis5kFilteredVal)) {
    throw Error(ErrorCode::count_mismatch,
                "DIS5K filtering produced " + std::to_string(m.count(Split::train)) + " train / " +
                    std::to_string(m.count(Split::val)) + " val, expected 2777 / 457; review the exclusion list");
  }
  return m;
}

std::string manifest_to_jsonl(const DatasetManifest& m, const fs::path& relative_to) {
  std::string out;
  for (const SampleRecord& r : m.samples) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image"] = relative_string(m.image_path(r), relative_to);
    j["mask"] = relative_string(m.mask_path(r), relative_to);
    j["prompt"] = r.prompt;
    j["split"] = split_name(r.split);
    j["dataset"] = dataset_kind_name(r.dataset);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::create_directories(dir);
  const std::string text = manifest_to_jsonl(m, dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write manifest " + path.string());
  out << text;
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "manifest not found: " + path.string());
  DatasetManifest m;
  m.base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleRecord r;
      r.id = j.at("id").get<std::string>();
      r.image = j.at("image").get<std::string>();
      r.mask = j.at("mask").get<std::string>();
      r.prompt = j.at("prompt").get<std::string>();
      r.split = parse_split(j.value("split", "train"));
      r.dataset = parse_dataset_kind(j.value("dataset", "synthetic"));
      if (r.prompt.empty()) throw Error(ErrorCode::invalid_prompt, "empty prompt");
      m.kind = r.dataset;
      m.samples.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

LoadedSample load_sample(const DatasetManifest& m, const SampleRecord& r) {
  LoadedSample s;
  s.id = r.id;
  s.prompt = r.prompt;
  s.image = io::read_image(m.image_path(r));
  s.mask = io::read_mask(m.mask_path(r));
  if (s.image.height() != s.mask.height() || s.image.width() != s.mask.width()) {
    throw Error(ErrorCode::shape_mismatch, "mask and image sizes differ for sample " + r.id);
  }
  return s;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb category_color(std::string_view cat) {
  if (cat == "line") return {0.9, 0.25, 0.2};
  if (cat == "ring") return {0.2, 0.8, 0.3};
  return {0.2, 0.35, 0.9};
}

BinaryMask draw_structure(std::string_view cat, Rng& rng, int size) {
  const double s = size;
  const double f = s / 64.0;
  BinaryMask m(size, size);
  if (cat == "line") {
    double x0, y0, x1, y1;
    if (rng.uniform() < 0.5) {
      x0 = 0;
      y0 = rng.uniform(8 * f, s - 8 * f);
      x1 = s;
      y1 = rng.uniform(8 * f, s - 8 * f);
    } else {
      x0 = rng.uniform(8 * f, s - 8 * f);
      y0 = 0;
      x1 = rng.uniform(8 * f, s - 8 * f);
      y1 = s;
    }
    const double half_width = rng.integer(0, 2) == 0 ? 1.0 : 1.5;
    const double dx = x1 - x0, dy = y1 - y0, len = std::hypot(dx, dy);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = std::abs((x + 0.5 - x0) * dy - (y + 0.5 - y0) * dx) / len;
        if (d <= half_width) m.set(y, x, true);
      }
    }
  } else if (cat == "ring") {
    const double cx = rng.uniform(24 * f, 40 * f), cy = rng.uniform(24 * f, 40 * f);
    const double r = rng.uniform(12 * f, 22 * f);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (std::abs(std::hypot(x + 0.5 - cx, y + 0.5 - cy) - r) <= 1.0) m.set(y, x, true);
      }
    }
  } else {
    const int spacing = static_cast<int>(std::lround(rng.integer(8, 13) * f));
    const int x0 = static_cast<int>(std::lround(rng.integer(2, 12) * f));
    const int y0 = static_cast<int>(std::lround(rng.integer(2, 12) * f));
    const int x1 = static_cast<int>(std::lround(rng.integer(44, 62) * f));
    const int y1 = static_cast<int>(std::lround(rng.integer(44, 62) * f));
    const int ox = rng.integer(0, spacing), oy = rng.integer(0, spacing);
    for (int y = y0; y < std::min(y1, size); ++y) {
      for (int x = x0; x < std::min(x1, size); ++x) {
        if ((x - ox) % spacing == 0 || (y - oy) % spacing == 0) m.set(y, x, true);
      }
    }
  }
  return m;
}

}  // namespace

SyntheticSample render_synthetic_sample(std::uint64_t seed, int index, int size, std::string_view category,
                                        std::string_view distractor) {
  if (size < 16) throw Error(ErrorCode::invalid_size, "synthetic images need at least 16 pixels per side");
  if (index < 0) throw Error(ErrorCode::invalid_input, "synthetic sample index must be non-negative");
  auto known = [](std::string_view c) {
    return std::find(kSyntheticCategories.begin(), kSyntheticCategories.end(), c) != kSyntheticCategories.end();
  };
  SyntheticSample s;
  s.category = category.empty() ? std::string(kSyntheticCategories[index % 3]) : std::string(category);
  s.distractor_category = distractor.empty()
                              ? std::string(kSyntheticCategories[(index + 1 + (index / 3) % 2) % 3])
                              : std::string(distractor);
  if (!known(s.category) || !known(s.distractor_category)) {
    throw Error(ErrorCode::invalid_input, "unknown synthetic category");
  }
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const double g0 = rng.uniform(0.35, 0.65);
  double fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = rng.uniform(0.05, 0.3);
    fy[k] = rng.uniform(0.05, 0.3);
    ph[k] = rng.uniform(0.0, 6.28);
  }
  s.image = FeatureMap(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double base = g0;
      for (int k = 0; k < 3; ++k) base += 0.05 * std::sin(fx[k] * x + fy[k] * y + ph[k]);
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = base;
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) += rng.uniform(-0.03, 0.03);
    }
  }
  s.distractor = draw_structure(s.distractor_category, rng, size);
  s.target = draw_structure(s.category, rng, size);
  const Rgb dc = category_color(s.distractor_category);
  const Rgb tc = category_color(s.category);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Rgb* col = s.target(y, x) ? &tc : s.distractor(y, x) ? &dc : nullptr;
      if (col) {
        s.image.at(y, x, 0) = col->r;
        s.image.at(y, x, 1) = col->g;
        s.image.at(y, x, 2) = col->b;
      }
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = std::clamp(s.image.at(y, x, c), 0.0, 1.0);
    }
  }
  return s;
}

DatasetManifest generate_synthetic_dataset(const fs::path& root, std::uint64_t seed, int n, int size) {
  if (n < 1) throw Error(ErrorCode::invalid_input, "synthetic dataset needs at least one sample");
  for (int i = 0; i < n; ++i) {
    const SyntheticSample s = render_synthetic_sample(seed, i, size);
    const std::string name = s.category + "_" + std::to_string(i) + ".png";
    io::write_file(root / "images" / name, io::encode_png_rgb(s.image));
    io::write_file(root / "masks" / name, io::encode_mask_png(s.target));
  }
  DatasetManifest m = build_manifest(root, DatasetKind::synthetic);
  write_manifest(m, root / "manifest.jsonl");
  return m;
}

}  // namespace tgseg
