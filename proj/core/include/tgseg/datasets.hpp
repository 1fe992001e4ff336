#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgseg/mask.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

enum class DatasetKind { synthetic, thinobject5k, dis5k, big };
enum class Split { train, val };

std::string_view dataset_kind_name(DatasetKind kind) noexcept;
DatasetKind parse_dataset_kind(std::string_view name);
std::string_view split_name(Split split) noexcept;
Split parse_split(std::string_view name);

struct SampleRecord {
  std::string id;
  std::string image;  // path relative to the manifest base directory
  std::string mask;
  std::string prompt;
  Split split = Split::train;
  DatasetKind dataset = DatasetKind::synthetic;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Exclusion {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  DatasetKind kind = DatasetKind::synthetic;
  std::filesystem::path base;
  std::vector<SampleRecord> samples;
  std::vector<Exclusion> excluded;
  std::vector<std::string> notes;

  std::size_t count(Split split) const noexcept;
  std::filesystem::path image_path(const SampleRecord& r) const { return base / r.image; }
  std::filesystem::path mask_path(const SampleRecord& r) const { return base / r.mask; }
};

/// Category prompt of a file name: the stem is split at '_', '-', '.', spaces
/// and other non-alphanumerics; tokens are taken up to the first one starting
/// with a digit, digits inside taken tokens are dropped, and the rest is
/// lowercased and joined with single spaces. Throws unextractable_prompt when
/// nothing alphabetic remains.
std::string prompt_from_filename(std::string_view path);

/// DIS5K names look like "<group>#<Group>#<class id>#<Class>#<photo id>"; the
/// class field is run through the same tokenization.
std::string prompt_from_dis5k_name(std::string_view path);

/// DIS5K counts after filtering a complete source (train, val).
inline constexpr std::size_t kDis5kFilteredTrain = 2777;
inline constexpr std::size_t kDis5kFilteredVal = 457;
inline constexpr std::size_t kDis5kSourceTrain = 3000;
inline constexpr std::size_t kDis5kSourceVal = 470;

/// Path of the DIS5K exclusion list shipped with the library.
std::filesystem::path default_dis5k_exclusions();

/// One stem per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> read_exclusion_list(const std::filesystem::path& path);

/// Scans a dataset root. Ordering is lexicographic by (split, id). Samples
/// without a mask, with an unextractable prompt or on the exclusion list are
/// recorded in `excluded`. Throws not_found for a missing root, empty_manifest
/// when nothing usable remains, and count_mismatch when a complete DIS5K
/// source does not filter to 2,777 / 457.
DatasetManifest build_manifest(const std::filesystem::path& root, DatasetKind kind,
                               const std::optional<std::filesystem::path>& exclusions = std::nullopt);

/// JSON-lines, one record per line, paths relative to the manifest's directory.
/// Reading an empty file yields an empty manifest.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_jsonl(const DatasetManifest& manifest, const std::filesystem::path& relative_to);

struct LoadedSample {
  std::string id;
  std::string prompt;
  FeatureMap image;
  BinaryMask mask;
};

/// Reads one sample; the mask must match the image dimensions.
LoadedSample load_sample(const DatasetManifest& manifest, const SampleRecord& record);

inline constexpr std::array<std::string_view, 3> kSyntheticCategories = {"line", "ring", "grid"};

struct SyntheticSample {
  FeatureMap image;
  BinaryMask target;
  BinaryMask distractor;
  std::string category;
  std::string distractor_category;
};

/// One seeded synthetic image: a thin target structure drawn over a thin
/// distractor of another category on a smoothly textured gray background.
/// Defaults pick the target as categories[index % 3] and a deterministic
/// distractor.
SyntheticSample render_synthetic_sample(std::uint64_t seed, int index, int size,
                                        std::string_view category = {}, std::string_view distractor = {});

/// Writes images/<cat>_<i>.png, masks/<cat>_<i>.png and manifest.jsonl under `root`.
DatasetManifest generate_synthetic_dataset(const std::filesystem::path& root, std::uint64_t seed, int n,
                                           int size);

}  // namespace tgseg
