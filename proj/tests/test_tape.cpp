#include <cmath>

#include "doctest.h"
#include "mtgrow/tape.hpp"

using namespace mtgrow;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double stddev = 1.0) {
  GaussianStream s(seed);
  return Tensor::randn(std::move(shape), s, stddev);
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  Tape tape;
  auto ident = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
  auto a = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
  auto out = tape.matmul(ident, a);
  CHECK(tape.value(out).data == std::vector<double>{1, 2, 3, 4});

  auto b = tape.input(Tensor({2, 1}, {5, 6}));
  auto prod = tape.matmul(a, b);
  CHECK(tape.value(prod).data == std::vector<double>{17, 39});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  auto a = tape.input(Tensor::zeros({2, 3}));
  auto b = tape.input(Tensor::zeros({2, 3}));
  try {
    tape.matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum(a*b) wrt a equals ones*b^T") {
  Tensor a = random_tensor({3, 4}, 11);
  Tensor b = random_tensor({4, 2}, 12);
  Tape tape;
  auto na = tape.input(a);
  auto nb = tape.input(b);
  auto loss = tape.sum(tape.matmul(na, nb));
  tape.backward(loss);
  // d sum(AB) / dA = ones(3x2) * B^T, i.e. row sums of B broadcast
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      double expected = b.at(j, 0) + b.at(j, 1);
      CHECK(tape.grad(na)[static_cast<size_t>(i * 4 + j)] == doctest::Approx(expected).epsilon(1e-12));
    }
  // against central finite differences, step 1e-6
  double err = grad_check([&b](Tape& t, Tape::NodeId x) { return t.sum(t.matmul(x, t.input(b))); }, a, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape tape;
  auto x = tape.input(Tensor({1, 4}, {0.7, 0.7, 0.7, 0.7}));
  auto s = tape.softmax(x, 1);
  for (double v : tape.value(s).data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("layer_norm of zero-mean unit-variance row is near identity") {
  // population variance exactly 1, mean 0
  Tensor x({1, 4}, {-1, 1, -1, 1});
  Tape tape;
  auto nx = tape.input(x);
  auto gain = tape.input(Tensor::full({4}, 1.0));
  auto bias = tape.input(Tensor::zeros({4}));
  double eps = 1e-5;
  auto y = tape.layer_norm(nx, gain, bias, eps);
  for (int j = 0; j < 4; ++j)
    CHECK(tape.value(y).data[j] == doctest::Approx(x.data[j]).epsilon(1e-4));
  CHECK_THROWS_AS(tape.layer_norm(nx, gain, bias, 0.0), Error);
}

TEST_CASE("relu gradient away from kink") {
  Tensor x({2}, {-1.0, 2.0});
  Tape tape;
  auto nx = tape.input(x);
  auto loss = tape.sum(tape.relu(nx));
  tape.backward(loss);
  CHECK(tape.grad(nx)[0] == 0.0);
  CHECK(tape.grad(nx)[1] == 1.0);
  double err = grad_check([](Tape& t, Tape::NodeId n) { return t.sum(t.relu(n)); }, x, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("elementwise ops grad check at random inputs") {
  Tensor x = random_tensor({3, 5}, 21);
  // shift away from relu kinks
  for (double& v : x.data) v += (v >= 0 ? 0.5 : -0.5);

  auto check = [&x](const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& f) {
    return grad_check(f, x, 1e-6);
  };
  CHECK(check([](Tape& t, Tape::NodeId n) { return t.sum(t.relu(n)); }) < 1e-4);
  CHECK(check([](Tape& t, Tape::NodeId n) { return t.sum(t.mul(n, n)); }) < 1e-4);
  // weight the softmax output: sum(softmax(x)) alone is constant per row
  Tensor w = random_tensor({3, 5}, 22);
  CHECK(check([&w](Tape& t, Tape::NodeId n) { return t.sum(t.mul(t.softmax(n, 1), t.input(w))); }) < 1e-4);
  CHECK(check([&w](Tape& t, Tape::NodeId n) { return t.sum(t.mul(t.softmax(n, 0), t.input(w))); }) < 1e-4);
  CHECK(check([](Tape& t, Tape::NodeId n) { return t.sum(t.transpose(n)); }) < 1e-4);
  CHECK(check([](Tape& t, Tape::NodeId n) {
          auto gain = t.input(Tensor({5}, {1.1, 0.9, 1.3, 0.8, 1.0}));
          auto bias = t.input(Tensor({5}, {0.1, -0.2, 0.0, 0.3, -0.1}));
          return t.sum(t.layer_norm(n, gain, bias, 1e-5));
        }) < 1e-4);
  CHECK(check([](Tape& t, Tape::NodeId n) {
          auto bias = t.input(Tensor({5}, {0.5, -0.5, 1.0, 2.0, -1.0}));
          return t.sum(t.mul(t.add(n, bias), t.add(n, bias)));
        }) < 1e-4);
}

TEST_CASE("layer_norm parameter gradients") {
  Tensor g({4}, {1.2, 0.7, 1.0, 0.9});
  Tensor x = random_tensor({3, 4}, 31);
  double err = grad_check(
      [&x](Tape& t, Tape::NodeId gn) {
        auto nx = t.input(x);
        auto bias = t.input(Tensor({4}, {0.1, 0.2, -0.1, 0.0}));
        return t.sum(t.layer_norm(nx, gn, bias, 1e-5));
      },
      g, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("embedding lookup accumulates grads into rows") {
  Tensor table = random_tensor({5, 3}, 41);
  std::vector<int32_t> ids{1, 3, 1};
  Tape tape;
  auto nt = tape.input(table);
  auto looked = tape.embedding_lookup(nt, ids);
  CHECK(tape.value(looked).rows() == 3);
  auto loss = tape.sum(looked);
  tape.backward(loss);
  // row 1 looked up twice, row 3 once, others zero
  for (int64_t j = 0; j < 3; ++j) {
    CHECK(tape.grad(nt)[static_cast<size_t>(1 * 3 + j)] == doctest::Approx(2.0));
    CHECK(tape.grad(nt)[static_cast<size_t>(3 * 3 + j)] == doctest::Approx(1.0));
    CHECK(tape.grad(nt)[static_cast<size_t>(0 * 3 + j)] == 0.0);
  }
  CHECK_THROWS_AS(tape.embedding_lookup(nt, {5}), Error);
}

TEST_CASE("concat then slice is identity") {
  GaussianStream s(55);
  for (int axis = 0; axis < 2; ++axis) {
    Tensor a = Tensor::randn({3, 4}, s, 1.0);
    Tensor b = Tensor::randn(axis == 0 ? std::vector<int64_t>{2, 4} : std::vector<int64_t>{3, 2}, s, 1.0);
    Tape tape;
    auto na = tape.input(a);
    auto nb = tape.input(b);
    auto cat = tape.concat({na, nb}, axis);
    auto back_a = tape.slice(cat, axis, 0, a.dim(axis));
    auto back_b = tape.slice(cat, axis, a.dim(axis), b.dim(axis));
    CHECK(bitwise_equal(tape.value(back_a), a));
    CHECK(bitwise_equal(tape.value(back_b), b));
  }
  // rank 1
  Tape tape;
  auto na = tape.input(Tensor({2}, {1, 2}));
  auto nb = tape.input(Tensor({3}, {3, 4, 5}));
  auto cat = tape.concat({na, nb}, 0);
  CHECK(tape.value(cat).data == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(bitwise_equal(tape.value(tape.slice(cat, 0, 2, 3)), tape.value(nb)));
  CHECK_THROWS_AS(tape.concat({na, nb}, 1), Error);
}

TEST_CASE("concat and slice gradients") {
  Tensor x = random_tensor({4, 3}, 61);
  double err = grad_check(
      [](Tape& t, Tape::NodeId n) {
        auto top = t.slice(n, 0, 0, 2);
        auto bottom = t.slice(n, 0, 2, 2);
        auto cat = t.concat({bottom, top, bottom}, 0);
        return t.sum(t.mul(cat, cat));
      },
      x, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("label_smoothed_nll epsilon 0 is exact cross entropy") {
  Tensor logits({2, 3}, {2.0, 0.0, 0.0, 0.5, 1.5, -0.5});
  std::vector<int32_t> targets{0, 1};
  Tape tape;
  auto nl = tape.input(logits);
  int64_t count = 0;
  auto loss = tape.label_smoothed_nll(nl, targets, 0.0, /*pad_id=*/-1, &count);
  CHECK(count == 2);
  // manual cross entropy
  auto ce_row = [&](int row, int target) {
    double mx = -1e300, z = 0.0;
    for (int j = 0; j < 3; ++j) mx = std::max(mx, logits.at(row, j));
    for (int j = 0; j < 3; ++j) z += std::exp(logits.at(row, j) - mx);
    return -(logits.at(row, target) - mx - std::log(z));
  };
  double expected = 0.5 * (ce_row(0, 0) + ce_row(1, 1));
  CHECK(tape.scalar_value(loss) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("label_smoothed_nll uniform logits gives ln V") {
  Tensor logits = Tensor::full({3, 4}, 1.7);
  Tape tape;
  auto loss = tape.label_smoothed_nll(tape.input(logits), {0, 2, 3}, 0.1, -1);
  CHECK(tape.scalar_value(loss) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("label_smoothed_nll matches direct summation oracle") {
  Tensor logits({1, 3}, {2.0, 0.0, 0.0});
  double eps = 0.1;
  // direct per-class summation
  double mx = 2.0;
  double z = 0.0;
  for (int j = 0; j < 3; ++j) z += std::exp(logits.data[j] - mx);
  double logz = std::log(z) + mx;
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    double q = eps / 3.0 + (j == 0 ? 1.0 - eps : 0.0);
    expected += q * (logz - logits.data[j]);
  }
  Tape tape;
  auto loss = tape.label_smoothed_nll(tape.input(logits), {0}, eps, -1);
  CHECK(std::fabs(tape.scalar_value(loss) - expected) < 1e-12);

  CHECK_THROWS_AS(Tape().label_smoothed_nll(Tape().input(logits), {0}, 1.0, -1), Error);
}

TEST_CASE("label_smoothed_nll excludes pad positions and has correct gradient") {
  Tensor logits = random_tensor({4, 5}, 71);
  std::vector<int32_t> targets{1, 0, 3, 0};  // pad_id 0 at rows 1 and 3
  Tape tape;
  auto nl = tape.input(logits);
  int64_t count = 0;
  auto loss = tape.label_smoothed_nll(nl, targets, 0.1, 0, &count);
  CHECK(count == 2);
  tape.backward(loss);
  for (int64_t j = 0; j < 5; ++j) {
    CHECK(tape.grad(nl)[static_cast<size_t>(1 * 5 + j)] == 0.0);
    CHECK(tape.grad(nl)[static_cast<size_t>(3 * 5 + j)] == 0.0);
  }
  double err = grad_check(
      [&targets](Tape& t, Tape::NodeId n) { return t.label_smoothed_nll(n, targets, 0.1, 0); }, logits,
      1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check quadratic and constant") {
  Tensor x({2}, {1.0, 2.0});
  Tape tape;
  auto nx = tape.input(x);
  auto loss = tape.sum(tape.mul(nx, nx));
  tape.backward(loss);
  CHECK(tape.grad(nx)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(tape.grad(nx)[1] == doctest::Approx(4.0).epsilon(1e-12));
  double err = grad_check([](Tape& t, Tape::NodeId n) { return t.sum(t.mul(n, n)); }, x, 1e-6);
  CHECK(err < 1e-8);

  // constant function: autodiff grad exactly zero
  Tape tape2;
  auto nx2 = tape2.input(x);
  auto c = tape2.sum(tape2.scale(nx2, 0.0));
  tape2.backward(c);
  CHECK(tape2.grad(nx2)[0] == 0.0);
  CHECK(tape2.grad(nx2)[1] == 0.0);
}

TEST_CASE("forward passes are deterministic") {
  Tensor a = random_tensor({6, 6}, 81);
  Tensor b = random_tensor({6, 6}, 82);
  auto run = [&] {
    Tape t(false);
    auto s = t.softmax(t.matmul(t.input(a), t.input(b)), 1);
    return t.value(s);
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("bias-row broadcast add") {
  Tape tape;
  auto m = tape.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto bias = tape.input(Tensor({3}, {10, 20, 30}));
  auto out = tape.add(m, bias);
  CHECK(tape.value(out).data == std::vector<double>{11, 22, 33, 14, 25, 36});
  auto loss = tape.sum(out);
  tape.backward(loss);
  CHECK(tape.grad(bias) == std::vector<double>{2, 2, 2});

  auto bad = tape.input(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(tape.add(m, bad), Error);
}
