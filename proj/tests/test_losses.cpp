#include <doctest.h>

#include <fcdx/autodiff.hpp>
#include <fcdx/losses.hpp>
#include <fcdx/nn_ops.hpp>
#include <fcdx/tensor.hpp>

#include <cmath>

using namespace fcdx;

TEST_SUITE("losses") {

TEST_CASE("cross entropy of uniform logits is ln(5)") {
  auto z = make_const(Tensor({5}));
  auto l = cross_entropy_logits(z, 0);
  CHECK(l->value.item() == doctest::Approx(std::log(5.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy of a confident correct logit is tiny but exact") {
  auto z = make_const(Tensor::from({5}, {10.0f, 0.0f, 0.0f, 0.0f, 0.0f}));
  auto l = cross_entropy_logits(z, 0);
  // log(e^10 + 4) - 10 = log1p(4 e^-10)
  CHECK(l->value.item() == doctest::Approx(std::log1p(4.0 * std::exp(-10.0))).epsilon(1e-4));
  CHECK(l->value.item() == doctest::Approx(1.816e-4).epsilon(1e-2));
}

TEST_CASE("cross entropy shifts away overflow") {
  auto z = make_const(Tensor::from({5}, {500.0f, 0.0f, 0.0f, 0.0f, 0.0f}));
  auto l = cross_entropy_logits(z, 1);
  CHECK(l->value.item() == doctest::Approx(500.0).epsilon(1e-5));
  CHECK(std::isfinite(l->value.item()));
}

TEST_CASE("rating loss maps 1..5 onto class indices and validates") {
  auto z = make_const(Tensor::from({5}, {0.0f, 0.0f, 9.0f, 0.0f, 0.0f}));
  auto via_rating = rating_cross_entropy(z, 3);
  auto direct = cross_entropy_logits(z, 2);
  CHECK(via_rating->value.item() == direct->value.item());
  CHECK_THROWS_AS((void)rating_cross_entropy(z, 0), data_error);
  CHECK_THROWS_AS((void)rating_cross_entropy(z, 6), data_error);
  auto four = make_const(Tensor({4}));
  CHECK_THROWS_AS((void)rating_cross_entropy(four, 2), dimension_error);
}

TEST_CASE("dice loss closed forms") {
  // probs p over a 2-voxel mask m: loss = 1 - (2*sum(p*m) + 1) / (sum p + sum m + 1)
  auto p = make_const(Tensor::from({1, 1, 1, 4}, {1.0f, 1.0f, 0.0f, 0.0f}));
  Tensor m({1, 1, 1, 4});
  m.data()[0] = 1.0f;
  m.data()[1] = 1.0f;
  auto perfect = dice_loss(p, m);
  CHECK(perfect->value.item() == doctest::Approx(1.0 - 5.0 / 5.0).epsilon(1e-6));

  Tensor disjoint({1, 1, 1, 4});
  disjoint.data()[2] = 1.0f;
  auto worst = dice_loss(p, disjoint);
  CHECK(worst->value.item() == doctest::Approx(1.0 - 1.0 / 4.0).epsilon(1e-6));

  // soft prediction: p = 0.5 everywhere, mask one voxel of four
  auto soft = make_const(Tensor::full({1, 1, 1, 4}, 0.5f));
  Tensor one({1, 1, 1, 4});
  one.data()[0] = 1.0f;
  auto l = dice_loss(soft, one);
  CHECK(l->value.item() == doctest::Approx(1.0 - (2.0 * 0.5 + 1.0) / (2.0 + 1.0 + 1.0)).epsilon(1e-6));
}

TEST_CASE("dice loss of an empty mask and empty prediction is zero") {
  auto p = make_const(Tensor({1, 1, 1, 4}));
  Tensor m({1, 1, 1, 4});
  auto l = dice_loss(p, m);
  CHECK(l->value.item() == doctest::Approx(0.0).epsilon(1e-6));
}

}  // TEST_SUITE
