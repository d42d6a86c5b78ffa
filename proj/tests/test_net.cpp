#include <doctest.h>

#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/net.hpp"
#include "support.hpp"

using namespace emoflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Straight-line evaluation of the layer graph, reading weights off the flat
// vector in storage order: each column-major weight block, then its bias.
Eigen::Vector2d oracle_forward(const FlowNetParams& p, double t, double x, double y) {
  const int h = p.hidden_width();
  const VectorXd& w = p.flat();
  Eigen::Index off = 0;
  auto dense = [&](int out, int in, const VectorXd& a) {
    const MatrixXd W = Eigen::Map<const MatrixXd>(w.data() + off, out, in);
    off += Eigen::Index{out} * in;
    const VectorXd b = w.segment(off, out);
    off += out;
    return VectorXd(W * a + b);
  };
  auto relu = [](const VectorXd& z) { return VectorXd(z.cwiseMax(0.0)); };

  const VectorXd in = Eigen::Vector3d(t, x, y);
  VectorXd a = relu(dense(h, 3, in));           // layer 1
  for (int k = 2; k <= 5; ++k) a = relu(dense(h, h, a) + a);
  VectorXd cat(h + 3);
  cat << a, in;
  a = relu(dense(h, h + 3, cat) + a);           // layer 6
  for (int k = 7; k <= 8; ++k) a = relu(dense(h, h, a) + a);
  const VectorXd out = dense(2, h, a);          // layer 9
  REQUIRE(off == w.size());
  return out;
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("parameter count pins the layer graph") {
  for (int h : {1, 8, 16, 256}) {
    const Eigen::Index expect = 7LL * h * h + 16LL * h + 2;
    CHECK(FlowNetParams::parameter_count(h) == expect);
    CHECK(FlowNetParams(h).size() == expect);
  }
  // 3->256, four 256->256, 259->256, two 256->256, 256->2.
  const Eigen::Index paper = (3 * 256 + 256) + 4 * (256 * 256 + 256) + (259 * 256 + 256) + 2 * (256 * 256 + 256) +
                             (256 * 2 + 2);
  CHECK(FlowNetParams::parameter_count(256) == paper);
  const FlowNetParams p(16);
  CHECK(p.in_dim(0) == 3);
  CHECK(p.in_dim(5) == 19);
  CHECK(p.out_dim(8) == 2);
  CHECK_THROWS_AS(FlowNetParams(0), ConfigError);
}

TEST_CASE("zero parameters give zero flow") {
  FlowNetParams p(16);
  p.set_zero();
  CHECK(net::forward(p, {0.3, {0.2, -0.4}}).isZero(0.0));
}

TEST_CASE("forward matches the straight-line oracle") {
  CounterRng rng(21);
  for (int n = 0; n < 100; ++n) {
    const auto p = testutil::random_params(1000 + n, 16, 3.0);
    const double t = rng.uniform(), x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
    const Eigen::Vector2d u = net::forward(p, {t, {x, y}});
    const Eigen::Vector2d o = oracle_forward(p, t, x, y);
    CHECK((u - o).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, o.norm()));
    CHECK(net::forward(p, {t, {x, y}}) == u);
  }
}

TEST_CASE("batched forward equals single queries") {
  const auto p = net::init_params(3, 32);
  CounterRng rng(22);
  Eigen::Matrix3Xd in(3, 300);
  for (int i = 0; i < in.cols(); ++i) in.col(i) << rng.uniform(), rng.uniform(-1, 1), rng.uniform(-1, 1);
  const Eigen::Matrix2Xd out = net::forward_batch(p, in);
  for (int i = 0; i < in.cols(); ++i) {
    const Eigen::Vector2d s = net::forward(p, {in(0, i), in.col(i).tail<2>()});
    CHECK((out.col(i) - s).norm() <= 1e-14);
  }
}

TEST_CASE("init is deterministic, seeded and bounded") {
  const auto a = net::init_params(5, 64), b = net::init_params(5, 64), c = net::init_params(6, 64);
  CHECK(a.flat() == b.flat());
  CHECK(a.flat() != c.flat());
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    const double bound = 1.0 / std::sqrt(a.in_dim(l));
    CHECK(a.weight(l).cwiseAbs().maxCoeff() <= bound);
    CHECK(a.bias(l).isZero(0.0));
  }
  const auto p = net::init_params(0, 256);
  CounterRng rng(23);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n)
    worst = std::max(worst, net::forward(p, {rng.uniform(), {rng.uniform(-1, 1), rng.uniform(-1, 1)}}).norm());
  CHECK(worst <= 1.0);
}

TEST_CASE("zero upstream gives zero gradients") {
  const auto p = testutil::random_params(7, 16);
  const auto g = net::backward(p, {0.5, {0.1, 0.2}}, Eigen::Vector2d::Zero());
  CHECK(g.params.flat().isZero(0.0));
  CHECK(g.x.isZero(0.0));
}

TEST_CASE("parameter gradient matches central differences") {
  CounterRng rng(24);
  for (int n = 0; n < 5; ++n) {
    auto p = testutil::random_params(50 + n, 16, 2.0);
    const FlowQuery q{rng.uniform(), {rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    const Eigen::Vector2d up(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const VectorXd analytic = net::backward(p, q, up).params.flat();
    VectorXd numeric(p.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double keep = p.flat()(i);
      p.flat()(i) = keep + h;
      const double fp = up.dot(net::forward(p, q));
      p.flat()(i) = keep - h;
      const double fm = up.dot(net::forward(p, q));
      p.flat()(i) = keep;
      numeric(i) = (fp - fm) / (2 * h);
    }
    CHECK(testutil::rel_err(analytic, numeric) <= 1e-6);
  }
}

TEST_CASE("input gradient matches central differences away from kinks") {
  CounterRng rng(25);
  int checked = 0;
  for (int n = 0; n < 200 && checked < 50; ++n) {
    const auto p = testutil::random_params(80 + n, 16, 2.0);
    const FlowQuery q{rng.uniform(), {rng.uniform(-1, 1), rng.uniform(-1, 1)}};
    ForwardCache cache;
    Eigen::Matrix3Xd in(3, 1);
    in << q.t, q.x_n;
    net::forward_batch(p, in, &cache);
    double nearest_kink = 1e300;
    for (const auto& z : cache.pre) nearest_kink = std::min(nearest_kink, z.cwiseAbs().minCoeff());
    if (nearest_kink < 1e-4) continue;
    ++checked;

    const Eigen::Vector2d up(rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Eigen::Vector2d analytic = net::backward(p, q, up).x;
    Eigen::Vector2d numeric;
    const double h = 1e-7;
    for (int k = 0; k < 2; ++k) {
      FlowQuery qp = q, qm = q;
      qp.x_n(k) += h;
      qm.x_n(k) -= h;
      numeric(k) = (up.dot(net::forward(p, qp)) - up.dot(net::forward(p, qm))) / (2 * h);
    }
    CHECK(testutil::rel_err(analytic, numeric) <= 1e-6);
  }
  CHECK(checked >= 20);
}

TEST_CASE("weighted batch backward equals weighted sum of single backwards") {
  const auto p = testutil::random_params(9, 16);
  CounterRng rng(26);
  Eigen::Matrix3Xd in(3, 10);
  Eigen::Matrix2Xd up(2, 10);
  VectorXd w(10);
  for (int i = 0; i < 10; ++i) {
    in.col(i) << rng.uniform(), rng.uniform(-1, 1), rng.uniform(-1, 1);
    up.col(i) << rng.uniform(-1, 1), rng.uniform(-1, 1);
    w(i) = rng.uniform(0, 2);
  }
  ForwardCache cache;
  net::forward_batch(p, in, &cache);
  FlowNetParams g(16);
  g.set_zero();
  Eigen::Matrix3Xd gx;
  net::backward_batch(p, cache, up, &g, &gx, &w);
  VectorXd expect = VectorXd::Zero(p.size());
  for (int i = 0; i < 10; ++i) {
    const auto s = net::backward(p, {in(0, i), in.col(i).tail<2>()}, up.col(i));
    expect += w(i) * s.params.flat();
    CHECK((gx.col(i).tail<2>() - s.x).norm() < 1e-13);
  }
  CHECK(testutil::rel_err(g.flat(), expect) < 1e-13);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto p = net::init_params(11, 24);
  std::stringstream ss;
  net::save_checkpoint(ss, p);
  const auto back = net::load_checkpoint(ss);
  CHECK(back.hidden_width() == 24);
  CHECK(back.flat() == p.flat());

  std::string bytes;
  {
    std::ostringstream os;
    net::save_checkpoint(os, p);
    bytes = os.str();
  }
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(net::load_checkpoint(truncated), Error);
  bytes[0] = 'X';
  std::istringstream bad_magic(bytes);
  CHECK_THROWS_AS(net::load_checkpoint(bad_magic), FormatError);
}

}  // TEST_SUITE
