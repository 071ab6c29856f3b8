#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "hybridct/binary_io.hpp"
#include "hybridct/data_ingest.hpp"
#include "hybridct/error.hpp"

namespace hybridct {
namespace {

namespace fs = std::filesystem;

class DatasetDir : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("hybridct_ingest_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_ / "COVID");
    fs::create_directories(root_ / "non-COVID");
  }
  void TearDown() override { fs::remove_all(root_); }

  void image(const std::string& rel, int value, int size = 10) {
    cv::imwrite((root_ / rel).string(), cv::Mat(size, size, CV_8UC1, cv::Scalar(value)));
  }

  fs::path root_;
};

TEST_F(DatasetDir, OneImagePerClass) {
  image("COVID/a.png", 200);
  image("non-COVID/b.png", 20);
  const DatasetManifest m = scan_dataset(root_);
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.count(Label::kCovid), 1u);
  EXPECT_EQ(m.count(Label::kNonCovid), 1u);
  EXPECT_EQ(m.records[0].record_id, "COVID/a.png");
  EXPECT_EQ(m.records[0].split, Split::kUnassigned);
}

TEST_F(DatasetDir, NonImageFilesAreSkipped) {
  image("COVID/a.png", 200);
  image("non-COVID/b.png", 20);
  io::write_text_file(root_ / "COVID" / "notes.txt", "not an image");
  io::write_text_file(root_ / "COVID" / "broken.png", "garbage");
  const DatasetManifest m = scan_dataset(root_);
  EXPECT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.skipped.size(), 2u);
}

TEST_F(DatasetDir, MissingRootIsAnError) {
  EXPECT_THROW(scan_dataset(root_ / "nope"), Error);
}

TEST_F(DatasetDir, ConstantImagesScaleToUnitRange) {
  image("COVID/white.png", 255);
  image("non-COVID/black.png", 0);
  const Tensor white = load_image_file(root_ / "COVID" / "white.png");
  EXPECT_EQ(white.height, 224);
  EXPECT_EQ(white.width, 224);
  EXPECT_EQ(white.channels, 3);
  for (float v : white.data) ASSERT_EQ(v, 1.0f);
  for (float v : load_image_file(root_ / "non-COVID" / "black.png").data) ASSERT_EQ(v, 0.0f);
}

DatasetManifest ten_records() {
  DatasetManifest m;
  for (int i = 0; i < 10; ++i) {
    ImageRecord r;
    r.label = i < 5 ? Label::kCovid : Label::kNonCovid;
    const std::string dir = i < 5 ? "COVID" : "non-COVID";
    r.path = "/data/" + dir + "/img" + std::to_string(i) + ".png";
    r.record_id = dir + "/img" + std::to_string(i) + ".png";
    m.records.push_back(r);
  }
  return m;
}

TEST(Split, ExactStratification) {
  SplitOptions o;
  o.train_frac = 0.8;
  o.val_frac = 0.0;
  const DatasetManifest s = split_dataset(ten_records(), o);
  EXPECT_EQ(s.count(Split::kTrain), 8u);
  EXPECT_EQ(s.count(Split::kTest), 2u);
  EXPECT_EQ(s.count(Split::kVal), 0u);
  EXPECT_EQ(s.count(Label::kCovid, Split::kTrain), 4u);
  EXPECT_EQ(s.count(Label::kCovid, Split::kTest), 1u);
  EXPECT_EQ(s.count(Label::kNonCovid, Split::kTest), 1u);
  EXPECT_TRUE(s.is_split());
}

TEST(Split, DeterministicAndSeedDependent) {
  SplitOptions o;
  o.val_frac = 0.0;
  const DatasetManifest a = split_dataset(ten_records(), o);
  const DatasetManifest b = split_dataset(ten_records(), o);
  EXPECT_EQ(format_manifest(a), format_manifest(b));
  bool differs = false;
  for (std::uint64_t seed = 1; seed < 20 && !differs; ++seed) {
    o.seed = seed;
    differs = format_manifest(split_dataset(ten_records(), o)) != format_manifest(a);
  }
  EXPECT_TRUE(differs);
}

TEST(Split, SizesFollowCeilingConvention) {
  DatasetManifest m;
  for (int i = 0; i < 200; ++i) {
    ImageRecord r;
    r.label = i < 120 ? Label::kCovid : Label::kNonCovid;
    r.record_id = "x/" + std::to_string(i);
    r.path = r.record_id;
    m.records.push_back(r);
  }
  const DatasetManifest s = split_dataset(m, SplitOptions{});
  // n_test = ceil(0.15 * 200) = 30, n_val = ceil(0.1 * 170) = 17
  EXPECT_EQ(s.count(Split::kTest), 30u);
  EXPECT_EQ(s.count(Split::kVal), 17u);
  EXPECT_EQ(s.count(Split::kTrain), 153u);
  EXPECT_NEAR(static_cast<double>(s.count(Label::kCovid, Split::kTest)), 18.0, 1.0);
}

TEST(Split, PatientModeKeepsPatientsTogether) {
  DatasetManifest m;
  for (int p = 0; p < 12; ++p)
    for (int k = 0; k < 3; ++k) {
      ImageRecord r;
      r.label = p % 2 == 0 ? Label::kCovid : Label::kNonCovid;
      const std::string name = "P" + std::to_string(p) + "_" + std::to_string(k) + ".png";
      r.record_id = (p % 2 == 0 ? "COVID/" : "non-COVID/") + name;
      r.path = "/d/" + r.record_id;
      m.records.push_back(r);
    }
  SplitOptions o;
  o.mode = SplitMode::kPatient;
  const DatasetManifest s = split_dataset(m, o);
  std::map<std::string, std::set<Split>> splits;
  for (const ImageRecord& r : s.records) splits[r.patient_id].insert(r.split);
  EXPECT_EQ(splits.size(), 12u);
  for (const auto& [patient, set] : splits) EXPECT_EQ(set.size(), 1u) << patient;
}

TEST(Manifest, RoundTripAndParseErrors) {
  SplitOptions o;
  o.val_frac = 0.0;
  const DatasetManifest s = split_dataset(ten_records(), o);
  EXPECT_EQ(parse_manifest(format_manifest(s)), s);

  const fs::path path = fs::temp_directory_path() / "hybridct_manifest.tsv";
  write_manifest(s, path);
  EXPECT_EQ(read_manifest(path), s);
  fs::remove(path);

  std::string text = format_manifest(s);
  const auto pos = text.find("\tCOVID\t");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 7, "\tMAYBE\t");
  try {
    parse_manifest(text);
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("MAYBE"), std::string::npos);
  }
  EXPECT_THROW(parse_manifest(""), Error);
}

}  // namespace
}  // namespace hybridct
