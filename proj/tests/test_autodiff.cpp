#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "pdt/batch_norm.hpp"
#include "pdt/gradcheck.hpp"
#include "pdt/ops.hpp"
#include "pdt/optim.hpp"
#include "pdt/rng.hpp"
#include "pdt/tape.hpp"
#include "support/test_util.hpp"

using namespace pdt;
using pdt::testing::random_uniform;

// --- backward mechanics ------------------------------------------------------

TEST_CASE("backward through sum gives all-ones gradient") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tensor loss = sum_all(x, &tape);
  tape.backward(loss);
  REQUIRE(x.has_grad());
  for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == 1.0f);
}

TEST_CASE("backward through sigmoid at zero gives a quarter") {
  Tensor x = Tensor::scalar(0.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  Tensor loss = sigmoid(x, &tape);
  tape.backward(loss);
  CHECK(x.grad_item() == doctest::Approx(0.25f));
}

TEST_CASE("bce gradient at p=0.5, t=1 is -2") {
  Tensor p = Tensor::scalar(0.5f);
  p.set_requires_grad(true);
  Tape<float> tape;
  Tensor loss = binary_cross_entropy(p, Tensor::scalar(1.0f), &tape);
  tape.backward(loss);
  CHECK(p.grad_item() == doctest::Approx(-2.0f));
}

TEST_CASE("a consumed tape rejects a second backward") {
  Tensor x = Tensor::scalar(2.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  Tensor loss = scale(x, 3.0f, &tape);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  tape.reset();
  CHECK(tape.empty());
}

TEST_CASE("backward rejects non-scalar losses and empty tapes") {
  Tensor x({2, 2});
  x.set_requires_grad(true);
  Tape<float> tape;
  Tensor y = scale(x, 2.0f, &tape);
  CHECK_THROWS_AS(tape.backward(y), std::logic_error);

  Tape<float> empty;
  Tensor s = Tensor::scalar(1.0f);
  CHECK_THROWS_AS(empty.backward(s), std::logic_error);
}

TEST_CASE("gradients accumulate additively across uses") {
  // x used on two paths: loss = sum(x + x). Gradient must be 2 everywhere.
  TensorD x = TensorD::from({3}, {1.0, -2.0, 0.5});
  x.set_requires_grad(true);
  Tape<double> tape;
  TensorD loss = sum_all(add(x, x, &tape), &tape);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0);

  // Equality with the sum of single-use gradients, exact in 64-bit.
  TensorD x1 = TensorD::from({3}, {1.0, -2.0, 0.5});
  x1.set_requires_grad(true);
  Tape<double> t1;
  TensorD l1 = sum_all(x1, &t1);
  t1.backward(l1);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * x1.grad()[i]);
}

TEST_CASE("frozen tensors receive no gradient but grads still flow past them") {
  TensorD x = TensorD::from({2}, {1.0, 2.0});
  TensorD w = TensorD::from({2}, {3.0, 4.0});
  x.set_requires_grad(true);
  w.set_requires_grad(false);  // frozen
  Tape<double> tape;
  TensorD loss = sum_all(add(x, w, &tape), &tape);
  tape.backward(loss);
  CHECK(x.has_grad());
  CHECK(!w.has_grad());
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("running a recorded graph with a null tape records nothing") {
  Tensor x = Tensor::scalar(1.0f);
  x.set_requires_grad(true);
  Tape<float> tape;
  (void)sigmoid(x);
  CHECK(tape.empty());
  Tensor y = sigmoid(x, &tape);
  CHECK(tape.size() == 1);
  CHECK(y.requires_grad());
}

// --- finite-difference checks ------------------------------------------------

namespace {

GradCheckOptions fd_options() {
  GradCheckOptions o;
  o.eps = 1e-4;
  o.max_coords = 40;
  return o;
}

}  // namespace

TEST_CASE("finite differences: tanh on a random 4x4") {
  Rng rng(31);
  TensorD x = random_uniform<double>({4, 4}, rng, -1.5, 1.5);
  auto fn = [&](Tape<double>* tape) {
    return mean_all(tanh_act(x, tape), tape);
  };
  auto report = gradient_check<double>(fn, {{"x", x}}, fd_options());
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: conv2d input and weight") {
  Rng rng(32);
  TensorD x = random_uniform<double>({2, 3, 6, 6}, rng, -1.0, 1.0);
  TensorD w = random_uniform<double>({4, 3, 3, 3}, rng, -0.5, 0.5);
  auto fn = [&](Tape<double>* tape) {
    return mean_all(conv2d(x, w, 2, 1, tape), tape);
  };
  auto report = gradient_check<double>(fn, {{"x", x}, {"w", w}}, fd_options());
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: conv2d_transposed on 2x3x5x5") {
  Rng rng(33);
  TensorD x = random_uniform<double>({2, 3, 5, 5}, rng, -1.0, 1.0);
  TensorD w = random_uniform<double>({3, 2, 3, 3}, rng, -0.5, 0.5);
  auto fn = [&](Tape<double>* tape) {
    return mean_all(conv2d_transposed(x, w, 2, 1, 1, tape), tape);
  };
  auto report = gradient_check<double>(fn, {{"x", x}, {"w", w}}, fd_options());
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: batch norm train mode on 8x4x6x6") {
  Rng rng(34);
  TensorD x = random_uniform<double>({8, 4, 6, 6}, rng, -2.0, 2.0);
  auto state = BatchNormState<double>::make(4);
  Rng grng(35);
  pdt::testing::fill_uniform(state.gamma, grng, 0.5, 1.5);
  pdt::testing::fill_uniform(state.beta, grng, -0.5, 0.5);
  auto fn = [&](Tape<double>* tape) {
    // Square the output so the loss actually depends on the normalized
    // values (a plain mean is invariant to them).
    TensorD y = batch_norm2d(x, state, Mode::Train, tape);
    return mse_loss(y, TensorD::zeros(y.shape()), tape);
  };
  auto report = gradient_check<double>(
      fn, {{"x", x}, {"gamma", state.gamma}, {"beta", state.beta}},
      fd_options());
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: batch norm eval mode") {
  Rng rng(36);
  TensorD x = random_uniform<double>({2, 3, 4, 4}, rng, -2.0, 2.0);
  auto state = BatchNormState<double>::make(3);
  // Seed running stats from one train batch, then check the eval graph.
  (void)batch_norm2d(x, state, Mode::Train);
  auto fn = [&](Tape<double>* tape) {
    TensorD y = batch_norm2d(x, state, Mode::Eval, tape);
    return mse_loss(y, TensorD::zeros(y.shape()), tape);
  };
  auto report = gradient_check<double>(
      fn, {{"x", x}, {"gamma", state.gamma}, {"beta", state.beta}},
      fd_options());
  CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: remaining elementwise and loss ops") {
  Rng rng(37);
  // Keep values away from the relu/leaky-relu kink at 0 and the bce clamp.
  TensorD a = random_uniform<double>({3, 5}, rng, 0.1, 1.2);
  TensorD b = random_uniform<double>({3, 5}, rng, -1.2, -0.1);
  TensorD p = random_uniform<double>({7}, rng, 0.05, 0.95);
  TensorD t{{7}};
  for (int i = 0; i < 7; ++i) t.data()[i] = double(rng.next_below(2));

  struct Case {
    const char* name;
    std::function<TensorD(Tape<double>*)> fn;
    std::vector<std::pair<std::string, TensorD>> inputs;
  };
  const std::vector<Case> cases = {
      {"relu", [&](Tape<double>* tp) { return mean_all(relu(add(a, b, tp), tp), tp); },
       {{"a", a}, {"b", b}}},
      {"leaky_relu",
       [&](Tape<double>* tp) {
         return mean_all(leaky_relu(add(a, b, tp), 0.2, tp), tp);
       },
       {{"a", a}, {"b", b}}},
      {"sigmoid", [&](Tape<double>* tp) { return mean_all(sigmoid(a, tp), tp); },
       {{"a", a}}},
      {"scale", [&](Tape<double>* tp) { return sum_all(scale(a, -1.7, tp), tp); },
       {{"a", a}}},
      {"bce",
       [&](Tape<double>* tp) {
         return mean_all(binary_cross_entropy(p, t, tp), tp);
       },
       {{"p", p}}},
      {"mse", [&](Tape<double>* tp) { return mse_loss(a, b, tp); },
       {{"a", a}, {"b", b}}},
  };
  for (const Case& c : cases) {
    INFO(c.name);
    auto report = gradient_check<double>(c.fn, c.inputs, fd_options());
    CHECK(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("finite differences: structural ops") {
  Rng rng(38);
  TensorD a = random_uniform<double>({2, 2, 3, 3}, rng, -1.0, 1.0);
  TensorD b = random_uniform<double>({2, 1, 3, 3}, rng, -1.0, 1.0);
  auto fn = [&](Tape<double>* tape) {
    TensorD y = concat_channels(a, b, tape);
    return mse_loss(y, TensorD::zeros(y.shape()), tape);
  };
  auto report = gradient_check<double>(fn, {{"a", a}, {"b", b}}, fd_options());
  CHECK(report.max_rel_err < 1e-6);

  TensorD gen = random_uniform<double>({3, 2, 2, 2}, rng, -1.0, 1.0);
  TensorD c1 = random_uniform<double>({2, 2, 2}, rng, -1.0, 1.0);
  std::vector<TensorD> constants{TensorD{}, c1, TensorD{}};
  auto fn2 = [&](Tape<double>* tape) {
    TensorD y = compose_batch(gen, constants, {true, false, true}, tape);
    return mse_loss(y, TensorD::zeros(y.shape()), tape);
  };
  auto report2 = gradient_check<double>(fn2, {{"gen", gen}}, fd_options());
  CHECK(report2.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: channel bias") {
  Rng rng(39);
  TensorD x = random_uniform<double>({2, 3, 4, 4}, rng, -1.0, 1.0);
  TensorD bias = random_uniform<double>({3}, rng, -0.5, 0.5);
  auto fn = [&](Tape<double>* tape) {
    TensorD y = add_channel_bias(x, bias, tape);
    return mse_loss(y, TensorD::zeros(y.shape()), tape);
  };
  auto report =
      gradient_check<double>(fn, {{"x", x}, {"bias", bias}}, fd_options());
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("finite differences: composite conv stack") {
  // conv -> bias -> leaky relu -> batch norm -> transposed conv -> sigmoid
  // -> bce, the full op inventory chained as in the real networks.
  Rng rng(40);
  TensorD x = random_uniform<double>({2, 2, 8, 8}, rng, -1.0, 1.0);
  TensorD w1 = random_uniform<double>({4, 2, 3, 3}, rng, -0.4, 0.4);
  TensorD b1 = random_uniform<double>({4}, rng, -0.2, 0.2);
  TensorD w2 = random_uniform<double>({4, 2, 3, 3}, rng, -0.4, 0.4);
  auto state = BatchNormState<double>::make(4);
  auto fn = [&](Tape<double>* tape) {
    TensorD h = conv2d(x, w1, 2, 1, tape);
    h = add_channel_bias(h, b1, tape);
    h = leaky_relu(h, 0.2, tape);
    h = batch_norm2d(h, state, Mode::Train, tape);
    h = conv2d_transposed(h, w2, 2, 1, 1, tape);
    h = sigmoid(h, tape);
    TensorD labels = TensorD::full(h.shape(), 1.0);
    return mean_all(binary_cross_entropy(h, labels, tape), tape);
  };
  auto report = gradient_check<double>(
      fn,
      {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2},
       {"gamma", state.gamma}, {"beta", state.beta}},
      fd_options());
  CHECK(report.max_rel_err < 1e-3);
}

// --- optimizer ---------------------------------------------------------------

TEST_CASE("sgd momentum follows the classical update") {
  Tensor theta = Tensor::scalar(1.0f);
  SgdMomentum<float> opt(0.5f);
  opt.add_parameter("theta", theta);

  theta.ensure_grad()[0] = 1.0f;
  opt.step(0.1f);
  // v = 0.5*0 + 1 = 1; theta = 1 - 0.1*1 = 0.9
  CHECK(theta.item() == doctest::Approx(0.9f));

  theta.zero_grad();
  theta.ensure_grad()[0] = 1.0f;
  opt.step(0.1f);
  // v = 0.5*1 + 1 = 1.5; theta = 0.9 - 0.15 = 0.75
  CHECK(theta.item() == doctest::Approx(0.75f));

  // With zero gradients the velocity decays geometrically by mu.
  float prev = theta.item();
  float expected_v = 1.5f;
  for (int i = 0; i < 3; ++i) {
    theta.zero_grad();
    theta.ensure_grad();  // zero gradient
    opt.step(0.1f);
    expected_v *= 0.5f;
    CHECK(prev - theta.item() == doctest::Approx(0.1f * expected_v));
    prev = theta.item();
  }
}

TEST_CASE("optimizer rejects parameters with missing gradients") {
  Tensor a = Tensor::scalar(1.0f);
  Tensor b = Tensor::scalar(2.0f);
  SgdMomentum<float> opt(0.5f);
  opt.add_parameter("a", a);
  opt.add_parameter("b", b);
  a.ensure_grad()[0] = 1.0f;
  CHECK_THROWS_AS(opt.step(0.1f), std::logic_error);
  // The failed step must not have moved anything.
  CHECK(a.item() == 1.0f);
  opt.ensure_grads();
  opt.step(0.1f);
  CHECK(a.item() == doctest::Approx(0.9f));
  CHECK(b.item() == 2.0f);
}

TEST_CASE("adam takes a bounded bias-corrected first step") {
  Tensor theta = Tensor::scalar(5.0f);
  Adam<float> opt(0.5f);
  opt.add_parameter("theta", theta);
  theta.ensure_grad()[0] = 1e-3f;  // small gradient, step still ~lr
  opt.step(0.01f);
  // First step: m-hat = g, v-hat = g^2 -> step = lr * g/|g| = lr.
  CHECK(5.0f - theta.item() == doctest::Approx(0.01f).epsilon(1e-3));

  // Direction follows the gradient sign.
  theta.zero_grad();
  theta.ensure_grad()[0] = -2.0f;
  const float before = theta.item();
  opt.step(0.01f);
  CHECK(theta.item() > before);
}

TEST_CASE("velocity buffers are exposed for checkpointing") {
  Tensor a = Tensor::scalar(1.0f);
  SgdMomentum<float> opt(0.5f);
  opt.add_parameter("a", a);
  a.ensure_grad()[0] = 2.0f;
  opt.step(0.1f);
  auto buffers = opt.state_buffers();
  REQUIRE(buffers.size() == 1);
  CHECK(buffers[0].first == "a.velocity");
  CHECK((*buffers[0].second)[0] == doctest::Approx(2.0f));

  Adam<float> adam(0.9f);
  Tensor b = Tensor::scalar(1.0f);
  adam.add_parameter("b", b);
  CHECK(adam.state_buffers().size() == 2);
  CHECK(adam.scalar_state()[0].first == "adam_steps");
}
