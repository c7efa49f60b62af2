#include <doctest.h>

#include <fcdx/autodiff.hpp>
#include <fcdx/model.hpp>
#include <fcdx/random.hpp>

#include <cmath>
#include <cstdio>
#include <set>
#include <string>

using namespace fcdx;

namespace {

Tensor randnf(const std::vector<int>& shape, RandomStream& rs) {
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rs.normal());
  return t;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("desk trunk channel progression") {
  ModelConfig cfg;
  ParamSetT<float> ps;
  RandomStream init(1);
  BackboneT<float> bb(ps, init, cfg);
  // stem 32, +3*32 dense, halve, +8*32, halve, +4*32
  CHECK(bb.channels[0] == 32);
  CHECK(bb.channels[1] == 128);
  CHECK(bb.channels[2] == 320);
  CHECK(bb.channels[3] == 288);
}

TEST_CASE("parameter budget splits: encoder small, seg head tiny") {
  Model m{ModelConfig{}};
  auto trunk = m.params.count_prefix("backbone.");
  auto encoder = m.params.count_prefix("prior.");
  auto seg_head = m.params.count_prefix("backbone.seg.");
  CHECK(trunk > 0);
  CHECK(encoder * 100 <= trunk * 55);
  CHECK(seg_head * 100 < trunk * 5);
}

TEST_CASE("parameter names are unique and duplicates rejected") {
  Model m{ModelConfig::tiny()};
  std::set<std::string> names;
  for (const auto& [name, var] : m.params.params) {
    CHECK(names.insert(name).second);
    CHECK(var->requires_grad);
  }
  ParamSetT<float> ps;
  ps.add("dup", Tensor({1}));
  CHECK_THROWS_AS(ps.add("dup", Tensor({1})), contract_error);
}

TEST_CASE("tiny forward pass emits the contracted shapes") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  RandomStream rs(3);
  auto x = make_const(randnf({1, cfg.input_size, cfg.input_size, cfg.input_size}, rs));
  auto out = m.backbone(x, /*training=*/false);
  int S = cfg.input_size;
  CHECK(out.cls_features->value.shape() == std::vector<int>{cfg.cls_channels, S, S, S});
  CHECK(out.seg_pre->value.shape() == std::vector<int>{cfg.seg_channels, S, S, S});
  CHECK(out.level_features[1]->value.dim(1) == S / 2);
  CHECK(out.level_features[2]->value.dim(1) == S / 4);

  auto pri = m.prior(x, false);
  CHECK(pri.mu->value.shape() == std::vector<int>{cfg.latent_dim});
  CHECK(pri.log_var->value.shape() == std::vector<int>{cfg.latent_dim});

  auto f = reparameterize(pri.mu, pri.log_var, RandomStream(4));
  auto seg_logits = m.heads.seg(out.seg_pre, f);
  CHECK(seg_logits->value.shape() == std::vector<int>{1, S, S, S});

  CloudSelection sel;
  sel.grid = S;
  sel.indices = {0, 5, 9};
  auto cloud = gather_cloud(out.cls_features, sel);
  auto rep = m.nsam.represent(cloud);
  CHECK(rep->value.shape() == std::vector<int>{cfg.cls_channels});
  auto logits = m.heads.cls(rep, f);
  CHECK(logits->value.shape() == std::vector<int>{cfg.num_classes});
}

TEST_CASE("cls_rows on one row equals cls") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  RandomStream rs(5);
  Tensor rep = randnf({cfg.cls_channels}, rs);
  Tensor f = randnf({cfg.latent_dim}, rs);
  auto single = m.heads.cls(make_const(rep), make_const(f));
  auto rows = m.heads.cls_rows(make_const(rep.reshaped({1, cfg.cls_channels})), make_const(f));
  REQUIRE(rows->value.shape() == std::vector<int>{1, cfg.num_classes});
  for (int i = 0; i < cfg.num_classes; ++i)
    CHECK(rows->value.data()[i] == doctest::Approx(single->value.data()[i]).epsilon(1e-5));
}

TEST_CASE("same seed builds identical weights, different seed does not") {
  ModelConfig cfg = ModelConfig::tiny();
  Model a{cfg, 7}, b{cfg, 7}, c{cfg, 8};
  bool all_same = true, any_diff = false;
  for (size_t i = 0; i < a.params.params.size(); ++i) {
    const Tensor& ta = a.params.params[i].second->value;
    const Tensor& tb = b.params.params[i].second->value;
    const Tensor& tc = c.params.params[i].second->value;
    for (std::int64_t j = 0; j < ta.numel(); ++j) {
      all_same &= (ta.data()[j] == tb.data()[j]);
      any_diff |= (ta.data()[j] != tc.data()[j]);
    }
  }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("weight snapshot round-trips through a checkpoint file bit-exactly") {
  ModelConfig cfg = ModelConfig::tiny();
  Model a{cfg, 21};
  Checkpoint ck = snapshot_weights(a.params);
  std::string path = "/tmp/fcdx_test_ck.dspc";
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  REQUIRE(back.entries.size() == ck.entries.size());
  Model b{cfg, 99};  // different init, must be fully overwritten
  restore_weights(back, b.params);
  for (size_t i = 0; i < a.params.params.size(); ++i) {
    const Tensor& ta = a.params.params[i].second->value;
    const Tensor& tb = b.params.params[i].second->value;
    REQUIRE(ta.numel() == tb.numel());
    for (std::int64_t j = 0; j < ta.numel(); ++j) CHECK(ta.data()[j] == tb.data()[j]);
  }
  std::remove(path.c_str());
}

TEST_CASE("restore rejects shape drift") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  Checkpoint ck = snapshot_weights(m.params);
  ck.entries[0].second = Tensor({3});
  CHECK_THROWS_AS(restore_weights(ck, m.params), data_error);
}

TEST_CASE("bn snapshot rewinds running statistics") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  auto snap = snapshot_bn(m.params);
  RandomStream rs(9);
  auto x = make_const(randnf({1, cfg.input_size, cfg.input_size, cfg.input_size}, rs));
  (void)m.backbone(x, /*training=*/true);  // mutates running stats
  bool moved = false;
  for (const auto& [name, st] : m.params.bn_states)
    for (std::int64_t i = 0; i < st->running_mean.numel(); ++i)
      moved |= (st->running_mean.data()[i] != 0.0f);
  CHECK(moved);
  restore_bn(m.params, snap);
  for (const auto& [name, st] : m.params.bn_states) {
    for (std::int64_t i = 0; i < st->running_mean.numel(); ++i) {
      CHECK(st->running_mean.data()[i] == 0.0f);
      CHECK(st->running_var.data()[i] == 1.0f);
    }
  }
}

TEST_CASE("training-mode forward differs from eval-mode forward") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  RandomStream rs(13);
  auto x = make_const(randnf({1, cfg.input_size, cfg.input_size, cfg.input_size}, rs));
  auto bn0 = snapshot_bn(m.params);
  auto tr = m.backbone(x, true);
  restore_bn(m.params, bn0);
  auto ev = m.backbone(x, false);
  bool differ = false;
  for (std::int64_t i = 0; i < tr.cls_features->value.numel() && !differ; ++i)
    differ = std::abs(tr.cls_features->value.data()[i] - ev.cls_features->value.data()[i]) > 1e-4f;
  CHECK(differ);
}

TEST_CASE("misshapen input is rejected with the expected geometry in the message") {
  ModelConfig cfg = ModelConfig::tiny();
  Model m{cfg};
  CHECK_THROWS_AS((void)m.backbone(make_const(Tensor({1, 4, 4, 4})), false), dimension_error);
  CHECK_THROWS_AS((void)m.backbone(make_const(Tensor({cfg.input_size, cfg.input_size, cfg.input_size})), false),
                  dimension_error);
  ModelConfig bad;
  bad.input_size = 10;  // not a multiple of 4
  CHECK_THROWS_AS(Model{bad}, config_error);
}

}  // TEST_SUITE
