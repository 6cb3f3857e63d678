#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gin/tape.hpp"

using gin::ad::GradCheckReport;
using gin::ad::Gradients;
using gin::ad::NodeId;
using gin::ad::Tape;
using gin::ad::Tensor;

namespace {

Tensor identity(std::size_t n) {
  Tensor t = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values) v = dist(rng);
  return t;
}

// Keeps relu inputs at least 10*eps away from the kink.
void push_from_zero(Tensor& t, double margin) {
  for (double& v : t.values) {
    if (std::abs(v) < margin) v = v < 0.0 ? -margin : margin;
  }
}

}  // namespace

TEST_CASE("affine matches hand examples") {
  Tape t;
  Tensor w = identity(2), x = Tensor::from({3, 4}), b = Tensor::from({0, 0});
  auto y = t.value(t.affine(t.input(w), t.input(x), t.input(b)));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 4.0);

  Tensor w0 = Tensor::matrix(2, 2), b2 = Tensor::from({1, 2});
  auto y2 = t.value(t.affine(t.input(w0), t.input(x), t.input(b2)));
  CHECK(y2[0] == 1.0);
  CHECK(y2[1] == 2.0);

  Tensor w3 = Tensor::matrix(2, 2);
  w3(0, 0) = 1;
  w3(0, 1) = 2;
  w3(1, 0) = 3;
  w3(1, 1) = 4;
  auto y3 = t.value(t.affine(t.input(w3), t.input(Tensor::from({1, 1})), t.input(Tensor::from({0, 0}))));
  CHECK(y3[0] == 3.0);
  CHECK(y3[1] == 7.0);
}

TEST_CASE("affine rejects shape mismatch") {
  Tape t;
  Tensor w = identity(2);
  CHECK_THROWS(t.affine(t.input(w), t.input(Tensor::from({1, 2, 3})), t.input(Tensor::from({0, 0}))));
  CHECK_THROWS(t.affine(t.input(w), t.input(Tensor::from({1, 2})), t.input(Tensor::from({0, 0, 0}))));
}

TEST_CASE("relu forward and subgradient at zero") {
  Tape t;
  Tensor x = Tensor::from({-1, 0, 2});
  auto y = t.value(t.relu(t.input(x)));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  auto neg = t.value(t.relu(t.input(Tensor::from({-3, -0.5}))));
  CHECK(neg[0] == 0.0);
  CHECK(neg[1] == 0.0);

  // Gradient mask with upstream ones: dot(relu(x), ones).
  Tape t2;
  Tensor xp = Tensor::from({-1, 0, 2});
  NodeId leaf = t2.param(xp);
  NodeId loss = t2.dot(t2.relu(leaf), t2.input(Tensor::from({1, 1, 1})));
  Gradients g = t2.backward(loss);
  const Tensor& gx = g.dense_at(xp);
  CHECK(gx.values == std::vector<double>{0, 0, 1});
}

TEST_CASE("softmax examples and invariants") {
  Tape t;
  auto u = t.value(t.softmax(t.input(Tensor::from({5, 5, 5}))));
  CHECK(u[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(u[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto v = t.value(t.softmax(t.input(Tensor::from({0.0, std::log(2.0)}))));
  CHECK(v[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));

  std::mt19937_64 rng(11);
  for (int it = 0; it < 50; ++it) {
    Tensor x = random_tensor({1 + rng() % 8}, rng, -30.0, 30.0);
    Tensor shifted = x;
    for (double& s : shifted.values) s += 7.0;
    auto a = t.value(t.softmax(t.input(x)));
    auto b = t.value(t.softmax(t.input(shifted)));
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] >= 0.0);
      CHECK(a[i] <= 1.0);
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      sum += a[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("concat splits gradients back by offsets") {
  Tape t;
  auto y = t.value(t.concat(std::vector<NodeId>{t.input(Tensor::from({1})), t.input(Tensor::from({2, 3}))}));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);
  CHECK(y[2] == 3.0);

  Tensor single = Tensor::from({4, 5});
  auto s = t.value(t.concat(std::vector<NodeId>{t.input(single)}));
  CHECK(s[0] == 4.0);
  CHECK(s[1] == 5.0);

  CHECK_THROWS(t.concat(std::vector<NodeId>{}));

  Tape t2;
  Tensor a = Tensor::from({1, 2}), b = Tensor::from({3});
  NodeId la = t2.param(a), lb = t2.param(b);
  // loss = [a ‖ b] · [1, 2, 3]
  NodeId loss = t2.dot(t2.concat(std::vector<NodeId>{la, lb}), t2.input(Tensor::from({1, 2, 3})));
  Gradients g = t2.backward(loss);
  CHECK(g.dense_at(a).values == std::vector<double>{1, 2});
  CHECK(g.dense_at(b).values == std::vector<double>{3});
}

TEST_CASE("embed_lookup reads a row and scatters its gradient") {
  Tape t;
  Tensor table = Tensor::matrix(2, 2);
  table(0, 0) = 1;
  table(0, 1) = 2;
  table(1, 0) = 3;
  table(1, 1) = 4;
  NodeId leaf = t.param_rows(table);
  auto row = t.value(t.embed_lookup(leaf, 1));
  CHECK(row[0] == 3.0);
  CHECK(row[1] == 4.0);

  NodeId loss = t.dot(t.embed_lookup(leaf, 1), t.input(Tensor::from({1, 1})));
  Gradients g = t.backward(loss);
  Tensor dense = g.densified(table);
  CHECK(dense.values == std::vector<double>{0, 0, 1, 1});
}

TEST_CASE("backward on x*x and on an unreachable parameter") {
  Tape t;
  Tensor x = Tensor::from({3});
  Tensor unused = Tensor::from({5});
  NodeId lx = t.param(x);
  t.param(unused);
  NodeId loss = t.dot(lx, lx);
  Gradients g = t.backward(loss);
  CHECK(g.dense_at(x).values[0] == 6.0);
  CHECK(g.dense_at(unused).values[0] == 0.0);

  CHECK_THROWS(t.backward(t.input(Tensor::from({1, 2}))));  // non-scalar loss
}

TEST_CASE("bce loss values and gradient") {
  Tape t;
  Tensor p = Tensor::from({0.5});
  NodeId lp = t.param(p);
  NodeId loss = t.bce_loss(lp, 1.0);
  CHECK(t.value(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Gradients g = t.backward(loss);
  CHECK(g.dense_at(p).values[0] == doctest::Approx(-2.0).epsilon(1e-12));  // -y/p
}

TEST_CASE("every primitive op matches central finite differences") {
  std::mt19937_64 rng(1234);
  const double eps = 1e-6;

  auto check = [&](const char* name, auto&& build, std::vector<Tensor*> params) {
    std::vector<std::pair<std::string, Tensor*>> named;
    for (std::size_t i = 0; i < params.size(); ++i)
      named.emplace_back(name + std::to_string(i), params[i]);
    GradCheckReport rep = gin::ad::grad_check(build, named, eps, 1e-6);
    INFO(name << " max_rel_err " << rep.max_rel_err);
    CHECK(rep.pass);
  };

  for (int it = 0; it < 10; ++it) {
    const std::size_t n = 2 + rng() % 4;
    const std::size_t m = 2 + rng() % 4;

    {
      Tensor w = random_tensor({m, n}, rng), x = random_tensor({n}, rng), b = random_tensor({m}, rng);
      Tensor probe = random_tensor({m}, rng);
      check("affine", [&](Tape& t) {
        return t.dot(t.affine(t.param(w), t.param(x), t.param(b)), t.input(probe));
      }, {&w, &x, &b});
    }
    {
      Tensor x = random_tensor({n}, rng);
      push_from_zero(x, 10 * eps);
      Tensor probe = random_tensor({n}, rng);
      check("relu", [&](Tape& t) { return t.dot(t.relu(t.param(x)), t.input(probe)); }, {&x});
    }
    {
      Tensor x = random_tensor({n}, rng, -2.0, 2.0);
      Tensor probe = random_tensor({n}, rng);
      check("softmax", [&](Tape& t) { return t.dot(t.softmax(t.param(x)), t.input(probe)); }, {&x});
    }
    {
      Tensor x = random_tensor({1}, rng, -2.0, 2.0);
      check("sigmoid", [&](Tape& t) { return t.sigmoid(t.param(x)); }, {&x});
    }
    {
      Tensor a = random_tensor({n}, rng), b = random_tensor({n}, rng);
      check("dot", [&](Tape& t) { return t.dot(t.param(a), t.param(b)); }, {&a, &b});
    }
    {
      Tensor x = random_tensor({n}, rng), probe = random_tensor({n}, rng);
      check("scale", [&](Tape& t) { return t.dot(t.scale(t.param(x), 1.7), t.input(probe)); }, {&x});
    }
    {
      Tensor v1 = random_tensor({n}, rng), v2 = random_tensor({n}, rng), w = random_tensor({2}, rng);
      Tensor probe = random_tensor({n}, rng);
      check("weighted_sum", [&](Tape& t) {
        std::vector<NodeId> vs{t.param(v1), t.param(v2)};
        return t.dot(t.weighted_sum(vs, t.param(w)), t.input(probe));
      }, {&v1, &v2, &w});
    }
    {
      Tensor table = random_tensor({m, n}, rng), probe = random_tensor({n}, rng);
      const std::size_t row = rng() % m;
      check("embed", [&](Tape& t) {
        return t.dot(t.embed_lookup(t.param_rows(table), row), t.input(probe));
      }, {&table});
    }
    {
      Tensor p = random_tensor({1}, rng, 0.05, 0.95);
      check("bce", [&](Tape& t) { return t.bce_loss(t.param(p), static_cast<double>(it % 2)); }, {&p});
    }
    {
      Tensor x = random_tensor({n}, rng);
      check("mean_all", [&](Tape& t) { return t.mean_all(t.param(x)); }, {&x});
    }
  }
}

TEST_CASE("three-op chains match a single-expression oracle") {
  // softmax(relu(W x)) · probe, gradient w.r.t. x computed by hand.
  std::mt19937_64 rng(77);
  for (int it = 0; it < 20; ++it) {
    const std::size_t n = 3;
    Tensor w = random_tensor({n, n}, rng), x = random_tensor({n}, rng), probe = random_tensor({n}, rng);

    Tape t;
    NodeId lx = t.param(x);
    NodeId y = t.softmax(t.relu(t.matvec(t.input(w), lx)));
    Gradients g = t.backward(t.dot(y, t.input(probe)));
    const Tensor& got = g.dense_at(x);

    // Oracle: z = Wx; r = relu(z); s = softmax(r); f = s·probe.
    std::vector<double> z(n, 0.0), r(n), s(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) z[i] += w(i, j) * x.values[j];
    for (std::size_t i = 0; i < n; ++i) r[i] = std::max(0.0, z[i]);
    double mx = *std::max_element(r.begin(), r.end()), sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += (s[i] = std::exp(r[i] - mx));
    for (std::size_t i = 0; i < n; ++i) s[i] /= sum;
    double sg = 0.0;
    for (std::size_t i = 0; i < n; ++i) sg += probe.values[i] * s[i];
    std::vector<double> dr(n);
    for (std::size_t i = 0; i < n; ++i) dr[i] = s[i] * (probe.values[i] - sg) * (z[i] > 0 ? 1.0 : 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double dx = 0.0;
      for (std::size_t i = 0; i < n; ++i) dx += w(i, j) * dr[i];
      CHECK(got.values[j] == doctest::Approx(dx).epsilon(1e-10));
    }
  }
}

TEST_CASE("identical tape gives bitwise-identical gradients") {
  auto run = [] {
    std::mt19937_64 rng(5);
    Tensor w = random_tensor({4, 4}, rng), x = random_tensor({4}, rng), b = random_tensor({4}, rng);
    Tape t;
    NodeId y = t.softmax(t.relu(t.affine(t.param(w), t.param(x), t.param(b))));
    Gradients g = t.backward(t.mean_all(y));
    return g.dense_at(w).values;
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check passes on a quadratic and fails on a corrupted gradient") {
  Tensor p = Tensor::from({0.7, -1.3, 2.1});
  std::vector<std::pair<std::string, Tensor*>> named{{"p", &p}};

  auto quad = [&](Tape& t) {
    NodeId lp = t.param(p);
    return t.dot(lp, lp);
  };
  CHECK(gin::ad::grad_check(quad, named, 1e-6, 1e-6).pass);

  // The frozen copy re-captures p on every rebuild, so the numeric gradient
  // of p·frozen(p) is twice the analytic one.
  auto corrupted = [&](Tape& t) {
    Tensor frozen = p;
    return t.dot(t.param(p), t.input(frozen));
  };
  GradCheckReport rep = gin::ad::grad_check(corrupted, named, 1e-6, 1e-6);
  CHECK_FALSE(rep.pass);
  CHECK(rep.max_rel_err > 0.1);
}
