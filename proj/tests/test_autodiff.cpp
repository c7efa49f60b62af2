#include <doctest.h>

#include <fcdx/autodiff.hpp>
#include <fcdx/ops.hpp>
#include <fcdx/random.hpp>
#include <fcdx/tensor.hpp>
#include <fcdx/train.hpp>

#include <cmath>

using namespace fcdx;

TEST_SUITE("autodiff") {

TEST_CASE("leaves accumulate gradients across backward calls") {
  Tensor t({2});
  t.data()[0] = 1.0f;
  t.data()[1] = 2.0f;
  auto x = make_param(t);
  auto loss = sum(mul(x, x));
  backward(loss);
  CHECK(x->grad.data()[0] == doctest::Approx(2.0f));
  CHECK(x->grad.data()[1] == doctest::Approx(4.0f));
  // second pass over a fresh graph adds on top of the stored gradient
  auto loss2 = sum(x);
  backward(loss2);
  CHECK(x->grad.data()[0] == doctest::Approx(3.0f));
  CHECK(x->grad.data()[1] == doctest::Approx(5.0f));
}

TEST_CASE("constants do not grow graph state") {
  Tensor t = Tensor::from({3}, {1.0f, 2.0f, 3.0f});
  auto c = make_const(t);
  auto d = make_const(t);
  auto y = add(c, d);
  CHECK_FALSE(y->requires_grad);
  // backward on a pure-constant graph is a no-op rather than an error
  auto s = sum(y);
  backward(s);
  CHECK(c->grad.numel() == 0);
}

TEST_CASE("detach shares storage but blocks gradients") {
  Tensor t = Tensor::from({2}, {5.0f, -3.0f});
  auto x = make_param(t);
  auto d = detach(x);
  CHECK(d->value.data() == x->value.data());
  CHECK_FALSE(d->requires_grad);
  auto loss = sum(mul(x, d));  // d acts as a constant copy of x
  backward(loss);
  // d/dx sum(x * const(x)) = const(x)
  CHECK(x->grad.data()[0] == doctest::Approx(5.0f));
  CHECK(x->grad.data()[1] == doctest::Approx(-3.0f));
}

TEST_CASE("diamond graph sums both paths") {
  Tensor t = Tensor::from({1}, {3.0f});
  auto x = make_param(t);
  auto a = mul(x, x);      // x^2
  auto b = add(a, x);      // x^2 + x
  auto y = add(a, b);      // 2x^2 + x, dy/dx = 4x + 1 = 13
  backward(y);
  CHECK(x->grad.data()[0] == doctest::Approx(13.0f));
}

TEST_CASE("shallow tensor copies share storage, clone does not") {
  Tensor a({4});
  Tensor b = a;
  b.data()[2] = 7.0f;
  CHECK(a.data()[2] == 7.0f);
  Tensor c = a.clone();
  c.data()[2] = 9.0f;
  CHECK(a.data()[2] == 7.0f);
}

TEST_CASE("adam first step moves each weight by lr regardless of gradient scale") {
  // With zero-initialized moments, step 1 gives m_hat/sqrt(v_hat) = sign(g)
  // up to eps, so every coordinate moves by almost exactly lr.
  ParamSetT<float> ps;
  auto w = ps.add("w", Tensor::from({3}, {1.0f, -2.0f, 0.5f}));
  TrainConfig tc;
  tc.lr = 0.01f;
  Adam opt(ps, tc);
  w->grad = Tensor::from({3}, {100.0f, -0.003f, 1e-8f});
  opt.step(ps);
  CHECK(w->value.data()[0] == doctest::Approx(1.0f - 0.01f).epsilon(1e-4));
  CHECK(w->value.data()[1] == doctest::Approx(-2.0f + 0.01f).epsilon(1e-4));
  // zero-ish gradient barely moves: |update| <= lr
  CHECK(std::abs(w->value.data()[2] - 0.5f) <= 0.01f + 1e-7f);
}

TEST_CASE("adam matches a hand-stepped reference over several updates") {
  ParamSetT<float> ps;
  auto w = ps.add("w", Tensor::from({1}, {0.7f}));
  TrainConfig tc;
  tc.lr = 0.1f;
  Adam opt(ps, tc);

  double m = 0, v = 0, x = 0.7;
  const double b1 = tc.beta1, b2 = tc.beta2, eps = tc.adam_eps;
  for (int step = 1; step <= 5; ++step) {
    double g = 2.0 * x;  // d/dx x^2
    w->grad = Tensor::from({1}, {static_cast<float>(2.0 * w->value.data()[0])});
    opt.step(ps);
    ps.zero_grads();

    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, step));
    double vh = v / (1 - std::pow(b2, step));
    x -= tc.lr * mh / (std::sqrt(vh) + eps);
    CHECK(w->value.data()[0] == doctest::Approx(static_cast<float>(x)).epsilon(1e-5));
  }
}

TEST_CASE("zero_grads clears accumulated leaf gradients") {
  ParamSetT<float> ps;
  auto w = ps.add("w", Tensor::from({2}, {1.0f, 2.0f}));
  backward(sum(mul(w, w)));
  CHECK(w->grad.numel() == 2);
  ps.zero_grads();
  for (int i = 0; i < 2; ++i) CHECK(w->grad.data()[i] == 0.0f);
}

}  // TEST_SUITE
