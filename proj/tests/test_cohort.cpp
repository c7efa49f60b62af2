#include <doctest.h>

#include <fcdx/cohort.hpp>
#include <fcdx/metrics.hpp>
#include <fcdx/preprocess.hpp>
#include <fcdx/random.hpp>
#include <fcdx/volume.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unistd.h>

using namespace fcdx;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fcdx_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_SUITE("cohort") {

TEST_CASE("hu normalization hand values") {
  CHECK(normalize_hu_value(-1024.0f) == doctest::Approx(-1.0));
  CHECK(normalize_hu_value(400.0f) == doctest::Approx(0.9921875));
  CHECK(normalize_hu_value(-312.0f) == doctest::Approx(-0.0078125));
  // clipping
  CHECK(normalize_hu_value(-3000.0f) == doctest::Approx(-1.0));
  CHECK(normalize_hu_value(2000.0f) == doctest::Approx(0.9921875));
}

TEST_CASE("volume files round-trip exactly") {
  TempDir td("prvx");
  RandomStream rs(3);
  Volume v;
  v.data = Tensor({5, 4, 3});
  for (std::int64_t i = 0; i < v.data.numel(); ++i)
    v.data.data()[i] = static_cast<float>(rs.normal());
  v.spacing = {0.7f, 1.0f, 1.25f};
  std::string p = td.str() + "/vol.prvx";
  write_volume(p, v);
  Volume back = read_volume(p);
  CHECK_FALSE(back.is_mask);
  CHECK(back.data.shape() == v.data.shape());
  CHECK(back.spacing == v.spacing);
  for (std::int64_t i = 0; i < v.data.numel(); ++i)
    CHECK(back.data.data()[i] == v.data.data()[i]);

  Volume m;
  m.data = Tensor({2, 2, 2});
  m.data.data()[3] = 1.0f;
  m.is_mask = true;
  std::string pm = td.str() + "/mask.prvx";
  write_volume(pm, m);
  Volume mb = read_volume(pm);
  CHECK(mb.is_mask);
  for (std::int64_t i = 0; i < 8; ++i) CHECK(mb.data.data()[i] == m.data.data()[i]);
}

TEST_CASE("generation is byte-deterministic in (count, ambiguity, seed)") {
  TempDir a("gen_a"), b("gen_b");
  CohortConfig ca{6, 0.4, 123, a.str()};
  CohortConfig cb{6, 0.4, 123, b.str()};
  auto sa = generate_cohort(ca);
  auto sb = generate_cohort(cb);
  CHECK(sa.fold_counts == sb.fold_counts);
  CHECK(sa.rating_hist == sb.rating_hist);
  CHECK(read_bytes(a.str() + "/manifest.jsonl") == read_bytes(b.str() + "/manifest.jsonl"));
  CHECK(read_bytes(a.str() + "/images/n00003.prvx") == read_bytes(b.str() + "/images/n00003.prvx"));
  CHECK(read_bytes(a.str() + "/masks/n00002_r1.prvx") == read_bytes(b.str() + "/masks/n00002_r1.prvx"));

  TempDir c("gen_c");
  CohortConfig cc{6, 0.4, 124, c.str()};
  (void)generate_cohort(cc);
  CHECK(read_bytes(a.str() + "/manifest.jsonl") != read_bytes(c.str() + "/manifest.jsonl"));
}

TEST_CASE("generated records satisfy the structural contract") {
  TempDir td("gen_s");
  CohortConfig cfg{10, 0.5, 77, td.str()};
  auto summary = generate_cohort(cfg);
  int total_folds = 0;
  for (int c : summary.fold_counts) total_folds += c;
  CHECK(total_folds == 10);

  auto records = load_manifest(td.str() + "/manifest.jsonl");
  REQUIRE(records.size() == 10);
  std::set<std::string> ids;
  for (const auto& r : records) {
    CHECK(ids.insert(r.id).second);
    CHECK(r.fold >= 0);
    CHECK(r.fold <= 4);
    REQUIRE(r.annotations.size() == 4);
    Volume img = read_volume(td.str() + "/" + r.crop_path);
    CHECK(img.data.shape() == std::vector<int>{32, 32, 32});
    CHECK_FALSE(img.is_mask);
    // normalized intensity range
    for (std::int64_t i = 0; i < img.data.numel(); ++i) {
      CHECK(img.data.data()[i] >= -1.0f);
      CHECK(img.data.data()[i] <= 1.0f);
    }
    for (const auto& ann : r.annotations) {
      CHECK(ann.rating >= 1);
      CHECK(ann.rating <= 5);
      Volume mk = read_volume(td.str() + "/" + ann.mask_path);
      CHECK(mk.is_mask);
      CHECK(mk.data.shape() == std::vector<int>{32, 32, 32});
      double vol = 0;
      for (std::int64_t i = 0; i < mk.data.numel(); ++i) {
        float v = mk.data.data()[i];
        CHECK((v == 0.0f || v == 1.0f));
        vol += v;
      }
      CHECK(vol >= 10.0);  // big enough that a perfect segmenter never refuses
    }
  }
}

TEST_CASE("rater masks of one record overlap strongly") {
  TempDir td("gen_j");
  CohortConfig cfg{8, 0.8, 31, td.str()};
  (void)generate_cohort(cfg);
  auto records = load_manifest(td.str() + "/manifest.jsonl");
  for (const auto& r : records) {
    std::vector<Volume> masks;
    for (const auto& ann : r.annotations) masks.push_back(read_volume(td.str() + "/" + ann.mask_path));
    for (size_t i = 0; i < masks.size(); ++i)
      for (size_t j = i + 1; j < masks.size(); ++j)
        CHECK(dice_coefficient(masks[i].data, masks[j].data) >= 0.6);
  }
}

TEST_CASE("ambiguity drives rater disagreement") {
  TempDir lo("gen_lo"), hi("gen_hi");
  auto slo = generate_cohort(CohortConfig{24, 0.0, 5, lo.str()});
  auto shi = generate_cohort(CohortConfig{24, 0.9, 5, hi.str()});
  CHECK(slo.disagreement_records == 0);
  CHECK(shi.disagreement_records > slo.disagreement_records);
}

TEST_CASE("manifest loader points at the offending record") {
  TempDir td("gen_e");
  (void)generate_cohort(CohortConfig{3, 0.2, 9, td.str()});
  fs::remove(td.path / "images" / "n00001.prvx");
  try {
    (void)load_manifest(td.str() + "/manifest.jsonl");
    FAIL("expected data_error");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("n00001") != std::string::npos);
  }
}

TEST_CASE("manifest save/load round-trip") {
  TempDir td("gen_r");
  (void)generate_cohort(CohortConfig{4, 0.3, 13, td.str()});
  auto records = load_manifest(td.str() + "/manifest.jsonl");
  save_manifest(td.str() + "/copy.jsonl", records);
  auto again = load_manifest(td.str() + "/copy.jsonl");
  REQUIRE(again.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(again[i].id == records[i].id);
    CHECK(again[i].fold == records[i].fold);
    CHECK(again[i].crop_path == records[i].crop_path);
    REQUIRE(again[i].annotations.size() == records[i].annotations.size());
    for (size_t j = 0; j < records[i].annotations.size(); ++j) {
      CHECK(again[i].annotations[j].rating == records[i].annotations[j].rating);
      CHECK(again[i].annotations[j].mask_path == records[i].annotations[j].mask_path);
    }
  }
}

TEST_CASE("augmentation applies one rigid transform to image and masks alike") {
  RandomStream rs(17);
  Tensor img({8, 8, 8});
  Tensor mask({8, 8, 8});
  for (std::int64_t i = 0; i < img.numel(); ++i) img.data()[i] = static_cast<float>(i);
  mask.data()[3 * 64 + 4 * 8 + 5] = 1.0f;
  for (int rep = 0; rep < 12; ++rep) {
    Tensor im = img.clone(), mk = mask.clone();
    RandomStream sub = rs.child(static_cast<std::uint64_t>(rep));
    augment(im, {&mk}, sub);
    // mask stays a single voxel (rigid moves preserve counts up to the shift
    // pushing it off-grid, which a center voxel never is)
    double cnt = 0;
    std::int64_t where = -1;
    for (std::int64_t i = 0; i < mk.numel(); ++i)
      if (mk.data()[i] != 0.0f) {
        cnt += mk.data()[i];
        where = i;
      }
    REQUIRE(cnt == 1.0);
    // the image voxel that travelled with it is the one the mask marked
    CHECK(im.data()[where] == doctest::Approx(3 * 64 + 4 * 8 + 5));
  }
}

TEST_CASE("same stream, same augmentation; streams are consumed positionally") {
  RandomStream a(77), b(77);
  Tensor i1({4, 4, 4}), i2({4, 4, 4});
  for (std::int64_t i = 0; i < 64; ++i) i1.data()[i] = i2.data()[i] = static_cast<float>(i * 0.5);
  augment(i1, {}, a);
  augment(i2, {}, b);
  for (std::int64_t i = 0; i < 64; ++i) CHECK(i1.data()[i] == i2.data()[i]);
}

}  // TEST_SUITE
