#include <doctest.h>

#include <fcdx/cohort.hpp>
#include <fcdx/eval.hpp>
#include <fcdx/train.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace fcdx;
namespace fs = std::filesystem;

namespace {

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

NoduleRecord rec_with_ratings(const std::string& id, std::vector<int> ratings) {
  NoduleRecord r;
  r.id = id;
  int rater = 0;
  for (int v : ratings) {
    ExpertAnnotation a;
    a.rater = rater++;
    a.rating = v;
    r.annotations.push_back(a);
  }
  return r;
}

}  // namespace

TEST_SUITE("train_eval") {

TEST_CASE("config file parsing: values, comments, rejects") {
  TempDir td("cfg");
  {
    std::ofstream out(td.str() + "/train.cfg");
    out << "# comment line\n"
        << "epochs=7\n"
        << "lr=0.01\n"
        << "scheme=low\n"
        << "seed=42   # trailing comment\n"
        << "\n"
        << "dice_weight=0.5\n";
  }
  TrainConfig tc = parse_train_config(td.str() + "/train.cfg");
  CHECK(tc.epochs == 7);
  CHECK(tc.lr == doctest::Approx(0.01f));
  CHECK(tc.scheme == "low");
  CHECK(tc.seed == 42);
  CHECK(tc.dice_weight == doctest::Approx(0.5f));
  CHECK(tc.batch_size == 8);  // untouched default

  {
    std::ofstream out(td.str() + "/bad.cfg");
    out << "epochz=7\n";
  }
  CHECK_THROWS_AS((void)parse_train_config(td.str() + "/bad.cfg"), config_error);
  {
    std::ofstream out(td.str() + "/bad2.cfg");
    out << "epochs=seven\n";
  }
  CHECK_THROWS_AS((void)parse_train_config(td.str() + "/bad2.cfg"), config_error);
  CHECK_THROWS_AS((void)parse_train_config(td.str() + "/missing.cfg"), io_error);
}

TEST_CASE("formatted config reparses to the same values") {
  TempDir td("cfg_rt");
  TrainConfig tc;
  tc.epochs = 3;
  tc.lr = 0.025f;
  tc.scheme = "low";
  tc.fold = 2;
  tc.seed = 99;
  {
    std::ofstream out(td.str() + "/rt.cfg");
    out << format_train_config(tc);
  }
  TrainConfig back = parse_train_config(td.str() + "/rt.cfg");
  CHECK(back.epochs == tc.epochs);
  CHECK(back.lr == doctest::Approx(tc.lr));
  CHECK(back.scheme == tc.scheme);
  CHECK(back.fold == tc.fold);
  CHECK(back.seed == tc.seed);
  CHECK(back.batch_size == tc.batch_size);
  CHECK(back.dice_weight == doctest::Approx(tc.dice_weight));
}

TEST_CASE("scheme filter: high keeps all, low drops sparse or fence-sitting records") {
  std::vector<NoduleRecord> recs;
  recs.push_back(rec_with_ratings("keep_sure", {1, 1, 2, 1}));
  recs.push_back(rec_with_ratings("drop_mean3", {3, 3, 3, 3}));
  recs.push_back(rec_with_ratings("drop_mean3_mixed", {2, 3, 4, 3}));
  recs.push_back(rec_with_ratings("drop_sparse", {5, 5}));
  recs.push_back(rec_with_ratings("keep_hot", {4, 5, 5}));

  auto high = filter_scheme(recs, "high");
  CHECK(high.size() == 5);

  auto low = filter_scheme(recs, "low");
  REQUIRE(low.size() == 2);
  CHECK(low[0].id == "keep_sure");
  CHECK(low[1].id == "keep_hot");

  CHECK_THROWS_AS((void)filter_scheme(recs, "medium"), config_error);
}

TEST_CASE("consensus label: mean below 3 benign, above malignant, exactly 3 excluded") {
  CHECK(consensus_label(rec_with_ratings("b", {1, 2, 2, 1})) == 0);
  CHECK(consensus_label(rec_with_ratings("m", {4, 4, 5, 5})) == 1);
  CHECK(consensus_label(rec_with_ratings("x", {3, 3, 3, 3})) == -1);
  CHECK(consensus_label(rec_with_ratings("x2", {2, 4, 1, 5})) == -1);  // mean exactly 3
  CHECK(consensus_label(rec_with_ratings("m2", {2, 4, 4, 3})) == 1);   // mean 3.25
  // integer-sum comparison, no float rounding: 7 ratings of sum 22 -> above 21
  CHECK(consensus_label(rec_with_ratings("m3", {3, 3, 3, 3, 3, 3, 4})) == 1);
}

TEST_CASE("fold summaries: refusals counted, only labelled records scored") {
  std::vector<RecordResult> rows;
  RecordResult a{"a", 0, 1, false, 0.1, 0.9, 0.01, 0.8};
  RecordResult b{"b", 0, 0, false, 0.8, 0.2, 0.02, 0.9};
  RecordResult c{"c", 0, 1, true, 0, 0, 0, 0};  // refused
  rows = {a, b, c};
  FoldReport rep = summarize_records(rows, 0);
  CHECK(rep.evaluated == 3);  // refused rows still count as evaluated
  CHECK(rep.refusals == 1);
  REQUIRE(rep.auc.has_value());
  CHECK(rep.auc.value() == doctest::Approx(1.0));
  REQUIRE(rep.accuracy.has_value());
  CHECK(rep.accuracy.value() == doctest::Approx(1.0));
  REQUIRE(rep.mean_dice.has_value());
  CHECK(rep.mean_dice.value() == doctest::Approx(0.85));

  FoldReport none = summarize_records({c}, 0);
  CHECK(none.evaluated == 1);
  CHECK(none.refusals == 1);
  CHECK_FALSE(none.auc.has_value());
  CHECK_FALSE(none.accuracy.has_value());
}

TEST_CASE("eval csv path swaps the extension") {
  CHECK(eval_csv_path("/tmp/x/report.json") == "/tmp/x/report.csv");
  CHECK(eval_csv_path("report.json") == "report.csv");
  CHECK(eval_csv_path("/tmp/odd_name") == "/tmp/odd_name.csv");
}

TEST_CASE("adam rejects nonsense hyperparameters") {
  ParamSetT<float> ps;
  ps.add("w", Tensor({2}));
  TrainConfig tc;
  tc.lr = -1.0f;
  CHECK_THROWS_AS(Adam(ps, tc), config_error);
}

}  // TEST_SUITE
