#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"
#include "thepose/autodiff.hpp"
#include "thepose/gradcheck.hpp"

using namespace thepose;
using thepose::testing::error_code;
using thepose::testing::random_matrix;

namespace {

ad::Matrix m(std::initializer_list<std::initializer_list<double>> rows) {
  ad::Matrix out(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) out(r, c++) = v;
    ++r;
  }
  return out;
}

// Keeps entries away from relu kinks.
ad::Matrix away_from_zero(ad::Matrix x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double& v = x.data()[i];
    if (std::abs(v) < 1e-2) v = v < 0 ? -0.1 : 0.1;
  }
  return x;
}

// Independent central differences of a scalar function of a matrix.
template <typename F>
ad::Matrix numeric_gradient(F&& f, ad::Matrix x, double eps) {
  ad::Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + eps;
    const double plus = f(x);
    x.data()[i] = orig - eps;
    const double minus = f(x);
    x.data()[i] = orig;
    g.data()[i] = (plus - minus) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("primitive values") {
  ad::Tape t;
  CHECK(ad::relu(t.constant(m({{-1, 2}}))).value() == m({{0, 2}}));

  ad::Groups g;
  const int members[] = {1, 2};
  g.push(members);
  const ad::Var mx = ad::max_over_groups(t.constant(m({{1}, {5}, {3}})), g);
  CHECK(mx.rows() == 1);
  CHECK(mx.value()(0, 0) == 5);
  const ad::Var mean = ad::mean_over_groups(t.constant(m({{1}, {5}, {3}})), g);
  CHECK(mean.value()(0, 0) == 4);

  const ad::Var c = ad::concat({t.constant(ad::Matrix::Ones(2, 3)), t.constant(ad::Matrix::Ones(2, 5))}, 1);
  CHECK(c.cols() == 8);
  CHECK(c.rows() == 2);
  const ad::Var r = ad::concat({t.constant(ad::Matrix::Ones(2, 3)), t.constant(ad::Matrix::Ones(4, 3))}, 0);
  CHECK(r.rows() == 6);

  const int idx[] = {2, 0, 2};
  CHECK(ad::gather_rows(t.constant(m({{1}, {2}, {3}})), idx).value() == m({{3}, {1}, {3}}));

  const ad::Var lin = ad::linear(t.constant(m({{1, 2}})), t.constant(m({{1, 0}, {0, 1}})),
                                 t.constant(m({{10, 20}})));
  CHECK(lin.value() == m({{11, 22}}));
  CHECK(ad::mse(t.constant(m({{1, 3}})), t.constant(m({{0, 0}}))).value()(0, 0) == 5);
  CHECK(ad::l1(t.constant(m({{1, -3}})), t.constant(m({{0, 0}}))).value()(0, 0) == 2);
  CHECK((ad::normalize_rows(t.constant(m({{3, 4}}))).value() - m({{0.6, 0.8}})).cwiseAbs().maxCoeff() < 1e-15);

  // Equal scores pool to the plain mean.
  const ad::Var pooled =
      ad::attention_pool(t.constant(m({{1, 2}, {3, 6}})), t.constant(m({{0.5}, {0.5}})));
  CHECK(pooled.value() == m({{2, 4}}));
}

TEST_CASE("shape and index errors") {
  ad::Tape t;
  const ad::Var a = t.constant(ad::Matrix::Ones(2, 3));
  const ad::Var b = t.constant(ad::Matrix::Ones(3, 2));
  CHECK(error_code([&] { ad::add(a, b); }) == "shape");
  CHECK(error_code([&] { ad::linear(a, a); }) == "shape");
  CHECK(error_code([&] { ad::concat({a, b}, 1); }) == "shape");
  CHECK(error_code([&] { ad::mse(a, b); }) == "shape");
  const int bad[] = {0, 2};
  CHECK(error_code([&] { ad::gather_rows(a, bad); }) == "index");
  const int neg[] = {-1};
  CHECK(error_code([&] { ad::gather_rows(a, neg); }) == "index");
  CHECK(error_code([&] { t.backward(a); }) == "non-scalar-loss");
}

TEST_CASE("backward basics") {
  ad::Tape t;
  const ad::Var x = t.variable(m({{3}}));
  t.backward(ad::mse(x, t.constant(m({{0}}))));
  CHECK(t.gradient(x)(0, 0) == 6);

  ad::Tape t2;
  const ad::Var w = t2.variable(m({{1, 2}}));
  const ad::Var unused = t2.variable(m({{4}}));
  const ad::Var loss = ad::sum(ad::scale(t2.constant(m({{1}})), 2.0));
  t2.backward(loss);
  CHECK(t2.gradient(w) == ad::Matrix::Zero(1, 2));
  CHECK(t2.gradient(unused) == ad::Matrix::Zero(1, 1));
}

TEST_CASE("three-layer MLP matches independent central differences") {
  std::mt19937_64 rng(17);
  const ad::Matrix x = random_matrix(rng, 6, 5);
  const ad::Matrix W1 = random_matrix(rng, 5, 8), b1 = random_matrix(rng, 1, 8);
  const ad::Matrix W2 = random_matrix(rng, 8, 7), b2 = random_matrix(rng, 1, 7);
  const ad::Matrix W3 = random_matrix(rng, 7, 3), b3 = random_matrix(rng, 1, 3);
  const ad::Matrix target = random_matrix(rng, 6, 3);

  auto forward = [&](ad::Tape& t, const ad::Var& w1) {
    ad::Var h = ad::relu(ad::linear(t.constant(x), w1, t.constant(b1)));
    h = ad::relu(ad::linear(h, t.constant(W2), t.constant(b2)));
    return ad::mse(ad::linear(h, t.constant(W3), t.constant(b3)), t.constant(target));
  };
  ad::Tape t;
  const ad::Var w1 = t.variable(W1);
  t.backward(forward(t, w1));
  const ad::Matrix analytic = t.gradient(w1);
  const ad::Matrix numeric = numeric_gradient(
      [&](const ad::Matrix& at) {
        ad::Tape s;
        return forward(s, s.variable(at)).value()(0, 0);
      },
      W1, 1e-5);
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double err = std::abs(analytic.data()[i] - numeric.data()[i]) /
                       std::max(1.0, std::abs(analytic.data()[i]));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gradient_check contract") {
  std::mt19937_64 rng(9);
  const ad::Matrix x = random_matrix(rng, 1, 1);
  const GradCheckResult id = gradient_check([](ad::Tape&, const ad::Var& v) { return v; }, x, 1e-5);
  CHECK(id.max_rel_error == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(id.checked == 1);

  const ad::Matrix W = random_matrix(rng, 4, 3), b = random_matrix(rng, 1, 3);
  const ad::Matrix target = random_matrix(rng, 5, 3);
  const GradCheckResult lin = gradient_check(
      [&](ad::Tape& t, const ad::Var& v) {
        return ad::mse(ad::linear(v, t.constant(W), t.constant(b)), t.constant(target));
      },
      random_matrix(rng, 5, 4), 1e-5);
  CHECK(lin.max_rel_error < 1e-6);
  CHECK(lin.checked == 20);
}

TEST_CASE("every primitive passes central differences") {
  std::mt19937_64 rng(23);
  const double eps = 1e-5;
  const ad::Matrix A = away_from_zero(random_matrix(rng, 6, 4));
  const ad::Matrix B = random_matrix(rng, 6, 4);
  const ad::Matrix W = random_matrix(rng, 4, 3);
  const ad::Matrix target4 = random_matrix(rng, 6, 4);
  ad::Groups groups;
  const int g0[] = {0, 1, 2}, g1[] = {3, 5}, g2[] = {4, 1, 0, 2};
  groups.push(g0);
  groups.push(g1);
  groups.push(g2);
  const int gather[] = {5, 0, 0, 3, 1};
  const ad::Matrix target_groups = random_matrix(rng, 3, 4);
  const ad::Matrix bias = random_matrix(rng, 1, 3);
  const ad::Matrix score_w = random_matrix(rng, 4, 1);

  struct Case {
    const char* name;
    TensorFn f;
  };
  const Case cases[] = {
      {"linear", [&](ad::Tape& t, const ad::Var& x) {
         return ad::sum(ad::linear(x, t.constant(W), t.constant(bias)));
       }},
      {"relu", [&](ad::Tape& t, const ad::Var& x) { return ad::mse(ad::relu(x), t.constant(target4)); }},
      {"add", [&](ad::Tape& t, const ad::Var& x) { return ad::mse(ad::add(x, t.constant(B)), t.constant(target4)); }},
      {"sub", [&](ad::Tape& t, const ad::Var& x) { return ad::mse(ad::sub(t.constant(B), x), t.constant(target4)); }},
      {"scale", [&](ad::Tape& t, const ad::Var& x) { return ad::mse(ad::scale(x, -2.5), t.constant(target4)); }},
      {"concat", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::concat({x, t.constant(B), x}, 1),
                        t.constant(ad::Matrix::Ones(6, 12)));
       }},
      {"concat rows", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::concat({x, t.constant(B)}, 0), t.constant(ad::Matrix::Ones(12, 4)));
       }},
      {"gather_rows", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::gather_rows(x, gather), t.constant(ad::Matrix::Ones(5, 4)));
       }},
      {"slice_cols", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::slice_cols(x, 1, 2), t.constant(ad::Matrix::Ones(6, 2)));
       }},
      {"max_over_groups", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::max_over_groups(x, groups), t.constant(target_groups));
       }},
      {"mean_over_groups", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::mean_over_groups(x, groups), t.constant(target_groups));
       }},
      {"normalize_rows", [&](ad::Tape& t, const ad::Var& x) {
         return ad::mse(ad::normalize_rows(x), t.constant(target4));
       }},
      {"attention_pool", [&](ad::Tape& t, const ad::Var& x) {
         const ad::Var scores = ad::linear(x, t.constant(score_w));
         return ad::mse(ad::attention_pool(x, scores), t.constant(ad::Matrix::Ones(1, 4)));
       }},
      {"sum", [&](ad::Tape&, const ad::Var& x) { return ad::sum(x); }},
      {"l1", [&](ad::Tape& t, const ad::Var& x) { return ad::l1(x, t.constant(B)); }},
  };
  for (const Case& c : cases) {
    const GradCheckResult r = gradient_check(c.f, A, eps);
    INFO(c.name);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(31);
  const ad::Matrix X = random_matrix(rng, 20, 6), W = random_matrix(rng, 6, 6);
  auto run = [&] {
    ad::Tape t;
    const ad::Var w = t.variable(W);
    const ad::Var h = ad::relu(ad::linear(t.constant(X), w));
    const ad::Var pooled = ad::max_over_groups(h, ad::Groups::all(20));
    const ad::Var att = ad::attention_pool(h, ad::linear(h, t.constant(ad::Matrix::Ones(6, 1))));
    t.backward(ad::sum(ad::add(pooled, att)));
    return t.gradient(w);
  };
  const ad::Matrix g1 = run(), g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("max over gathered rows ignores member order") {
  std::mt19937_64 rng(41);
  const ad::Matrix X = random_matrix(rng, 9, 5);
  std::vector<int> members = {4, 1, 7, 7, 0, 3, 8, 2, 5, 6, 1, 0};
  ad::Tape t;
  const ad::Var x = t.constant(X);
  const ad::Var base = ad::max_over_groups(ad::gather_rows(x, members), ad::Groups::fixed_width(
                                                                          {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 4));
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> shuffled;
    for (int g = 0; g < 3; ++g) {
      std::vector<int> part(members.begin() + g * 4, members.begin() + g * 4 + 4);
      std::shuffle(part.begin(), part.end(), rng);
      shuffled.insert(shuffled.end(), part.begin(), part.end());
    }
    const ad::Var y = ad::max_over_groups(ad::gather_rows(x, shuffled),
                                          ad::Groups::fixed_width({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, 4));
    CHECK(y.value() == base.value());
  }
}

}  // TEST_SUITE
