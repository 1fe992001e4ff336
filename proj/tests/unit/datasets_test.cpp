#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "tgseg/datasets.hpp"
#include "tgseg/image_io.hpp"

using namespace tgseg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tgseg_datasets_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p).put('\0');
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dis5k_name(int i, const char* cls) {
  return "1#Group#" + std::to_string(i % 7) + "#" + cls + "#" + std::to_string(100000 + i);
}

}  // namespace

TEST(PromptFromFilename, FixtureTable) {
  const auto cases = fixtures::prompt_cases();
  ASSERT_EQ(cases.size(), 30u);
  for (const auto& c : cases) {
    if (c.expected == "!error") {
      try {
        prompt_from_filename(c.file);
        ADD_FAILURE() << c.file << " should not yield a prompt";
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unextractable_prompt) << c.file;
      }
    } else {
      EXPECT_EQ(prompt_from_filename(c.file), c.expected) << c.file;
    }
  }
}

TEST(PromptFromDis5kName, UsesClassField) {
  EXPECT_EQ(prompt_from_dis5k_name("DIS-TR/im/1#Accessories#1#Bag#2339506821_83cf9f1d22_o.jpg"), "bag");
  EXPECT_EQ(prompt_from_dis5k_name("7#Electrical#3#Power_Line#1234.jpg"), "power line");
  EXPECT_EQ(prompt_from_dis5k_name("plain_name_3.jpg"), "plain name");
}

TEST(DatasetKind, ParseAndName) {
  for (auto k : {DatasetKind::synthetic, DatasetKind::thinobject5k, DatasetKind::dis5k, DatasetKind::big}) {
    EXPECT_EQ(parse_dataset_kind(dataset_kind_name(k)), k);
  }
  EXPECT_THROW(parse_dataset_kind("coco"), Error);
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_THROW(parse_split("test-dev"), Error);
}

TEST(BuildManifest, MissingRoot) {
  try {
    build_manifest(fs::temp_directory_path() / "tgseg_no_such_root", DatasetKind::synthetic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
    EXPECT_NE(std::string(e.what()).find("dataset root not found"), std::string::npos);
  }
}

TEST(BuildManifest, EmptyDirectory) {
  const fs::path root = fresh_dir("empty");
  try {
    build_manifest(root, DatasetKind::synthetic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_manifest);
  }
  fs::remove_all(root);
}

TEST(BuildManifest, SyntheticRootOfTen) {
  const fs::path root = fresh_dir("synthetic10");
  generate_synthetic_dataset(root, 0, 10, 64);
  const DatasetManifest m = build_manifest(root, DatasetKind::synthetic);
  EXPECT_EQ(m.samples.size(), 10u);
  EXPECT_TRUE(m.excluded.empty());
  for (const auto& r : m.samples) {
    EXPECT_EQ(r.prompt, prompt_from_filename(r.id));
    EXPECT_TRUE(fs::exists(m.image_path(r)));
    EXPECT_TRUE(fs::exists(m.mask_path(r)));
  }
  EXPECT_TRUE(std::is_sorted(m.samples.begin(), m.samples.end(),
                             [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; }));
  fs::remove_all(root);
}

TEST(BuildManifest, MissingMaskAndBadNamesAreExcludedWithReasons) {
  const fs::path root = fresh_dir("exclusions");
  generate_synthetic_dataset(root, 0, 3, 32);
  fs::copy_file(root / "images" / "line_0.png", root / "images" / "kite_7.png");
  fs::copy_file(root / "images" / "line_0.png", root / "images" / "000123.png");
  fs::copy_file(root / "masks" / "line_0.png", root / "masks" / "000123.png");
  const DatasetManifest m = build_manifest(root, DatasetKind::synthetic);
  EXPECT_EQ(m.samples.size(), 3u);
  ASSERT_EQ(m.excluded.size(), 2u);
  bool saw_mask = false, saw_prompt = false;
  for (const auto& e : m.excluded) {
    saw_mask |= e.path.find("kite_7") != std::string::npos && e.reason == "missing mask";
    saw_prompt |= e.path.find("000123") != std::string::npos && !e.reason.empty();
  }
  EXPECT_TRUE(saw_mask);
  EXPECT_TRUE(saw_prompt);
  fs::remove_all(root);
}

TEST(BuildManifest, ExclusionListIsApplied) {
  const fs::path root = fresh_dir("list");
  generate_synthetic_dataset(root, 0, 4, 32);
  std::ofstream(root / "skip.txt") << "# comment\n\nring_1.png\n  grid_2 \n";
  const DatasetManifest m = build_manifest(root, DatasetKind::synthetic, root / "skip.txt");
  EXPECT_EQ(m.samples.size(), 2u);
  EXPECT_EQ(m.excluded.size(), 2u);
  EXPECT_EQ(m.excluded[0].reason, "on exclusion list");
  fs::remove_all(root);
}

TEST(BuildManifest, ThinObjectSplitLists) {
  const fs::path root = fresh_dir("thin");
  for (const char* id : {"wire_1", "fence_2", "kite_3"}) {
    touch(root / "images" / (std::string(id) + ".jpg"));
    touch(root / "masks" / (std::string(id) + ".png"));
  }
  fs::create_directories(root / "list");
  std::ofstream(root / "list" / "train.txt") << "wire_1.jpg\nfence_2.jpg\n";
  std::ofstream(root / "list" / "test.txt") << "kite_3.jpg\n";
  const DatasetManifest m = build_manifest(root, DatasetKind::thinobject5k);
  EXPECT_EQ(m.count(Split::train), 2u);
  EXPECT_EQ(m.count(Split::val), 1u);
  EXPECT_EQ(m.samples.back().id, "kite_3");
  EXPECT_EQ(m.samples.back().prompt, "kite");
  fs::remove_all(root);
}

TEST(BuildManifest, BigLayout) {
  const fs::path root = fresh_dir("big");
  touch(root / "train" / "cat_01_im.jpg");
  touch(root / "train" / "cat_01_gt.png");
  touch(root / "test" / "bike_rack_02_im.png");
  touch(root / "test" / "bike_rack_02_gt.png");
  const DatasetManifest m = build_manifest(root, DatasetKind::big);
  ASSERT_EQ(m.samples.size(), 2u);
  EXPECT_EQ(m.samples[0].prompt, "cat");
  EXPECT_EQ(m.samples[1].prompt, "bike rack");
  EXPECT_EQ(m.samples[1].split, Split::val);
  fs::remove_all(root);
}

TEST(BuildManifest, Dis5kCompleteSourceCountCheck) {
  const fs::path root = fresh_dir("dis5k");
  std::ofstream list(root / "exclusions.txt");
  for (int i = 0; i < 3000; ++i) {
    const std::string n = dis5k_name(i, "Power_Line");
    touch(root / "DIS-TR" / "im" / (n + ".jpg"));
    touch(root / "DIS-TR" / "gt" / (n + ".png"));
    if (i % 13 == 0 && i / 13 < 223) list << n << ".jpg\n";
  }
  for (int i = 0; i < 470; ++i) {
    const std::string n = dis5k_name(5000 + i, "Chair");
    touch(root / "DIS-VD" / "im" / (n + ".jpg"));
    touch(root / "DIS-VD" / "gt" / (n + ".png"));
    if (i < 13) list << n << "\n";
  }
  list.close();

  const DatasetManifest m = build_manifest(root, DatasetKind::dis5k, root / "exclusions.txt");
  EXPECT_EQ(m.count(Split::train), kDis5kFilteredTrain);
  EXPECT_EQ(m.count(Split::val), kDis5kFilteredVal);
  EXPECT_EQ(m.samples.front().prompt, "power line");
  EXPECT_EQ(m.samples.back().prompt, "chair");

  std::ofstream(root / "none.txt") << "# nothing\n";
  try {
    build_manifest(root, DatasetKind::dis5k, root / "none.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::count_mismatch);
  }
  fs::remove_all(root);
}

TEST(BuildManifest, PartialDis5kSkipsCountCheck) {
  const fs::path root = fresh_dir("dis5k_partial");
  const std::string n = dis5k_name(1, "Bag");
  touch(root / "DIS-TR" / "im" / (n + ".jpg"));
  touch(root / "DIS-TR" / "gt" / (n + ".png"));
  const DatasetManifest m = build_manifest(root, DatasetKind::dis5k);
  EXPECT_EQ(m.samples.size(), 1u);
  fs::remove_all(root);
}

TEST(Manifest, WriteReadRoundTripAndStableBytes) {
  const fs::path root = fresh_dir("roundtrip");
  const DatasetManifest m = generate_synthetic_dataset(root, 0, 6, 32);
  write_manifest(m, root / "out" / "a.jsonl");
  write_manifest(build_manifest(root, DatasetKind::synthetic), root / "out" / "b.jsonl");
  EXPECT_EQ(slurp(root / "out" / "a.jsonl"), slurp(root / "out" / "b.jsonl"));
  const DatasetManifest back = read_manifest(root / "out" / "a.jsonl");
  ASSERT_EQ(back.samples.size(), m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, m.samples[i].id);
    EXPECT_EQ(fs::weakly_canonical(back.image_path(back.samples[i])),
              fs::weakly_canonical(m.image_path(m.samples[i])));
  }
  const std::string first = slurp(root / "out" / "a.jsonl").substr(0, 8);
  EXPECT_EQ(first, "{\"id\":\"g");
  fs::remove_all(root);
}

TEST(Manifest, EmptyFileReadsAsEmpty) {
  const fs::path root = fresh_dir("emptyfile");
  std::ofstream(root / "m.jsonl").close();
  EXPECT_TRUE(read_manifest(root / "m.jsonl").samples.empty());
  EXPECT_THROW(read_manifest(root / "missing.jsonl"), Error);
  std::ofstream(root / "bad.jsonl") << "{not json\n";
  EXPECT_THROW(read_manifest(root / "bad.jsonl"), Error);
  fs::remove_all(root);
}

TEST(LoadSample, ReadsImageAndMask) {
  const fs::path root = fresh_dir("load");
  const DatasetManifest m = generate_synthetic_dataset(root, 0, 2, 48);
  const LoadedSample s = load_sample(m, m.samples[0]);
  EXPECT_EQ(s.image.height(), 48);
  EXPECT_EQ(s.mask.width(), 48);
  EXPECT_GT(s.mask.count(), 0u);
  fs::remove_all(root);
}

TEST(SyntheticGenerator, BitIdenticalFiles) {
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  generate_synthetic_dataset(a, 0, 10, 64);
  generate_synthetic_dataset(b, 0, 10, 64);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  EXPECT_EQ(files, 21u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(SyntheticGenerator, TargetsAndDistractorsAreDisjointCategories) {
  for (int i = 0; i < 12; ++i) {
    const SyntheticSample s = render_synthetic_sample(3, i, 64);
    EXPECT_EQ(s.category, std::string(kSyntheticCategories[i % 3]));
    EXPECT_NE(s.category, s.distractor_category);
    EXPECT_GT(s.target.count(), 0u);
    EXPECT_GT(s.distractor.count(), 0u);
    for (double v : s.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  const SyntheticSample forced = render_synthetic_sample(1, 0, 64, "line", "grid");
  EXPECT_EQ(forced.category, "line");
  EXPECT_EQ(forced.distractor_category, "grid");
}

TEST(SyntheticGenerator, RingForegroundFractionMatchesGolden) {
  double total = 0;
  for (int i = 0; i < 100; ++i) {
    const SyntheticSample s = render_synthetic_sample(0, i, 64, "ring");
    total += static_cast<double>(s.target.count()) / static_cast<double>(s.target.size());
  }
  EXPECT_NEAR(total / 100, fixtures::golden()["ring_foreground_fraction_seed0_n100_size64"].get<double>(), 1e-15);
}

TEST(Dis5kExclusions, ShippedListIsReadable) {
  EXPECT_TRUE(fs::exists(default_dis5k_exclusions())) << default_dis5k_exclusions();
  EXPECT_NO_THROW(read_exclusion_list(default_dis5k_exclusions()));
}
