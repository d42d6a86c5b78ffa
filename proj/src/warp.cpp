#include "emoflow/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emoflow/error.hpp"
#include "emoflow/parallel.hpp"

namespace emoflow {

namespace {

// Events per chunk. Fixed so results never depend on the worker count.
constexpr std::size_t kChunk = 256;

Eigen::Matrix2Xd eval(const FlowNetParams& p, const Eigen::VectorXd& t, const Eigen::Matrix2Xd& x,
                      ForwardCache* cache) {
  Eigen::Matrix3Xd in(3, x.cols());
  in.row(0) = t.transpose();
  in.bottomRows<2>() = x;
  return net::forward_batch(p, in, cache);
}

void check_finite(const Eigen::Matrix2Xd& m, const std::vector<Eigen::Index>& cols, const EventBatch& batch,
                  const char* what) {
  if (m.allFinite()) return;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (!m.col(j).allFinite()) {
      const Eigen::Index src = batch.index[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])];
      throw DivergenceError(std::string(what) + " for event " + std::to_string(src), src);
    }
  }
}

// Sum of per-chunk gradients, always added in chunk order.
template <typename Fn>
FlowNetParams reduce_chunks(int hidden, std::size_t n_chunks, Fn&& fn) {
  FlowNetParams total(hidden);
  const auto wave = static_cast<std::size_t>(parallel::worker_count());
  std::vector<FlowNetParams> partial;
  for (std::size_t start = 0; start < n_chunks; start += wave) {
    const std::size_t count = std::min(wave, n_chunks - start);
    partial.assign(count, FlowNetParams(hidden));
    parallel::for_each_index(count, [&](std::size_t i) { fn(start + i, partial[i]); });
    for (const auto& g : partial) total.flat() += g.flat();
  }
  return total;
}

}  // namespace

void WarpConfig::validate() const {
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
}

Solver parse_solver(const std::string& s) {
  if (s == "euler") return Solver::kEuler;
  if (s == "rk4") return Solver::kRk4;
  throw ConfigError("unknown solver: " + s);
}

Backprop parse_backprop(const std::string& s) {
  if (s == "direct") return Backprop::kDirect;
  if (s == "adjoint") return Backprop::kAdjoint;
  throw ConfigError("unknown backprop mode: " + s);
}

std::string to_string(Solver s) { return s == Solver::kEuler ? "euler" : "rk4"; }
std::string to_string(Backprop b) { return b == Backprop::kDirect ? "direct" : "adjoint"; }

EventBatch make_batch(const NormalizedSegment& seg, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > seg.size() || begin > end) throw ConfigError("event range out of bounds");
  EventBatch b;
  b.x = seg.x.middleCols(begin, end - begin);
  b.t = seg.t.segment(begin, end - begin);
  b.index.resize(static_cast<std::size_t>(end - begin));
  std::iota(b.index.begin(), b.index.end(), begin);
  return b;
}

EventBatch make_batch(const NormalizedSegment& seg, const std::vector<Eigen::Index>& indices) {
  EventBatch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.x.resize(2, n);
  b.t.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = indices[static_cast<std::size_t>(j)];
    if (i < 0 || i >= seg.size()) throw ConfigError("event index out of bounds");
    b.x.col(j) = seg.x.col(i);
    b.t(j) = seg.t(i);
  }
  b.index = indices;
  return b;
}

namespace warp {

int step_count(double dt, int n_steps) {
  return std::max(1, static_cast<int>(std::ceil(static_cast<double>(n_steps) * std::abs(dt))));
}

std::vector<WarpedEvent> Trajectories::events() const {
  std::vector<WarpedEvent> out(static_cast<std::size_t>(batch_.size()));
  for (Eigen::Index j = 0; j < batch_.size(); ++j) {
    out[static_cast<std::size_t>(j)] = {x_ref_.col(j), batch_.index[static_cast<std::size_t>(j)], batch_.t(j)};
  }
  return out;
}

Trajectories integrate(const FlowNetParams& params, const EventBatch& batch, double t_ref, const WarpConfig& cfg) {
  cfg.validate();
  if (!(t_ref >= 0.0 && t_ref <= 1.0)) throw DomainError("t_ref must lie in [0, 1]");
  if (batch.x.cols() != batch.size() || static_cast<Eigen::Index>(batch.index.size()) != batch.size()) {
    throw ConfigError("event batch has inconsistent sizes");
  }
  Trajectories tr;
  tr.batch_ = batch;
  tr.t_ref_ = t_ref;
  tr.cfg_ = cfg;
  const Eigen::Index n = batch.size();
  tr.x_ref_.resize(2, n);

  std::vector<int> steps(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) steps[static_cast<std::size_t>(j)] = step_count(t_ref - batch.t(j), cfg.n_steps);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return steps[static_cast<std::size_t>(a)] > steps[static_cast<std::size_t>(b)];
  });

  const std::size_t n_chunks = (static_cast<std::size_t>(n) + kChunk - 1) / kChunk;
  tr.chunks_.resize(n_chunks);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    auto& ch = tr.chunks_[c];
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(lo + kChunk, static_cast<std::size_t>(n));
    ch.cols.assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto m = static_cast<Eigen::Index>(ch.cols.size());
    ch.steps.resize(m);
    ch.h.resize(m);
    ch.t0.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index col = ch.cols[static_cast<std::size_t>(j)];
      ch.steps(j) = steps[static_cast<std::size_t>(col)];
      ch.t0(j) = batch.t(col);
      ch.h(j) = (t_ref - batch.t(col)) / ch.steps(j);
    }
  }

  parallel::for_each_index(n_chunks, [&](std::size_t c) {
    auto& ch = tr.chunks_[c];
    const auto m = static_cast<Eigen::Index>(ch.cols.size());
    Eigen::Matrix2Xd x(2, m);
    for (Eigen::Index j = 0; j < m; ++j) x.col(j) = batch.x.col(ch.cols[static_cast<std::size_t>(j)]);

    Eigen::Index active = m;
    const int n_max = m > 0 ? ch.steps(0) : 0;
    ch.nodes.reserve(static_cast<std::size_t>(n_max));
    for (int s = 0; s < n_max; ++s) {
      while (active > 0 && ch.steps(active - 1) <= s) --active;
      const Eigen::Matrix2Xd xs = x.leftCols(active);
      ch.nodes.push_back(xs);
      const Eigen::VectorXd h = ch.h.head(active);
      const Eigen::VectorXd ts = ch.t0.head(active) + s * h;
      if (cfg.solver == Solver::kEuler) {
        x.leftCols(active) += eval(params, ts, xs, nullptr) * h.asDiagonal();
      } else {
        const Eigen::VectorXd half = 0.5 * h;
        const Eigen::Matrix2Xd k1 = eval(params, ts, xs, nullptr);
        const Eigen::Matrix2Xd k2 = eval(params, ts + half, xs + k1 * half.asDiagonal(), nullptr);
        const Eigen::Matrix2Xd k3 = eval(params, ts + half, xs + k2 * half.asDiagonal(), nullptr);
        const Eigen::Matrix2Xd k4 = eval(params, ts + h, xs + k3 * h.asDiagonal(), nullptr);
        x.leftCols(active) += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0).asDiagonal();
      }
      check_finite(x.leftCols(active), ch.cols, batch, "non-finite warped position");
    }
    for (Eigen::Index j = 0; j < m; ++j) tr.x_ref_.col(ch.cols[static_cast<std::size_t>(j)]) = x.col(j);
  });
  return tr;
}

std::vector<WarpedEvent> warp_to(const FlowNetParams& params, const EventBatch& batch, double t_ref,
                                 const WarpConfig& cfg) {
  return integrate(params, batch, t_ref, cfg).events();
}

namespace {

Eigen::Matrix2Xd gather(const Eigen::Matrix2Xd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::Matrix2Xd out(2, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

void check_upstream(const Trajectories& traj, const Eigen::Matrix2Xd& upstream) {
  if (upstream.cols() != traj.batch().size()) throw ConfigError("upstream size does not match the batch");
}

}  // namespace

FlowNetParams backward_direct(const FlowNetParams& params, const Trajectories& traj,
                              const Eigen::Matrix2Xd& upstream) {
  check_upstream(traj, upstream);
  const bool euler = traj.cfg_.solver == Solver::kEuler;
  return reduce_chunks(params.hidden_width(), traj.chunks_.size(), [&](std::size_t c, FlowNetParams& g) {
    const auto& ch = traj.chunks_[c];
    Eigen::Matrix2Xd adj = gather(upstream, ch.cols);
    ForwardCache c1, c2, c3, c4;
    Eigen::Matrix3Xd gin;
    for (auto s = static_cast<int>(ch.nodes.size()) - 1; s >= 0; --s) {
      const Eigen::Matrix2Xd& xs = ch.nodes[static_cast<std::size_t>(s)];
      const Eigen::Index active = xs.cols();
      const Eigen::VectorXd h = ch.h.head(active);
      const Eigen::VectorXd ts = ch.t0.head(active) + s * h;
      const Eigen::Matrix2Xd a = adj.leftCols(active);
      if (euler) {
        eval(params, ts, xs, &c1);
        net::backward_batch(params, c1, a * h.asDiagonal(), &g, &gin);
        adj.leftCols(active) += gin.bottomRows<2>();
        continue;
      }
      const Eigen::VectorXd half = 0.5 * h;
      const Eigen::Matrix2Xd k1 = eval(params, ts, xs, &c1);
      const Eigen::Matrix2Xd k2 = eval(params, ts + half, xs + k1 * half.asDiagonal(), &c2);
      const Eigen::Matrix2Xd k3 = eval(params, ts + half, xs + k2 * half.asDiagonal(), &c3);
      eval(params, ts + h, xs + k3 * h.asDiagonal(), &c4);

      Eigen::Matrix2Xd x_bar = a;
      net::backward_batch(params, c4, a * (h / 6.0).asDiagonal(), &g, &gin);
      x_bar += gin.bottomRows<2>();
      Eigen::Matrix2Xd k_bar = a * (h / 3.0).asDiagonal() + gin.bottomRows<2>() * h.asDiagonal();
      net::backward_batch(params, c3, k_bar, &g, &gin);
      x_bar += gin.bottomRows<2>();
      k_bar = a * (h / 3.0).asDiagonal() + gin.bottomRows<2>() * half.asDiagonal();
      net::backward_batch(params, c2, k_bar, &g, &gin);
      x_bar += gin.bottomRows<2>();
      k_bar = a * (h / 6.0).asDiagonal() + gin.bottomRows<2>() * half.asDiagonal();
      net::backward_batch(params, c1, k_bar, &g, &gin);
      x_bar += gin.bottomRows<2>();
      adj.leftCols(active) = x_bar;
    }
  });
}

FlowNetParams backward_adjoint(const FlowNetParams& params, const Trajectories& traj,
                               const Eigen::Matrix2Xd& upstream) {
  check_upstream(traj, upstream);
  const bool euler = traj.cfg_.solver == Solver::kEuler;
  return reduce_chunks(params.hidden_width(), traj.chunks_.size(), [&](std::size_t c, FlowNetParams& g) {
    const auto& ch = traj.chunks_[c];
    Eigen::Matrix2Xd adj = gather(upstream, ch.cols);
    Eigen::Matrix2Xd x = gather(traj.x_ref_, ch.cols);
    ForwardCache cache;
    Eigen::Matrix3Xd gin;

    // One evaluation of the augmented dynamics: returns f and J^T a, and adds
    // weight * a^T df/dtheta into g.
    auto stage = [&](const Eigen::VectorXd& t, const Eigen::Matrix2Xd& xs, const Eigen::Matrix2Xd& a,
                     const Eigen::VectorXd& weight, Eigen::Matrix2Xd* jta) {
      Eigen::Matrix2Xd f = eval(params, t, xs, &cache);
      net::backward_batch(params, cache, a, &g, &gin, &weight);
      *jta = gin.bottomRows<2>();
      return f;
    };

    for (auto s = static_cast<int>(ch.nodes.size()) - 1; s >= 0; --s) {
      const Eigen::Index active = ch.nodes[static_cast<std::size_t>(s)].cols();
      const Eigen::VectorXd h = ch.h.head(active);
      const Eigen::Matrix2Xd a = adj.leftCols(active);
      Eigen::Matrix2Xd ja1, ja2, ja3, ja4;
      if (euler) {
        // Discrete adjoint of x_{s+1} = x_s + h f(t_s, x_s) at the stored node.
        const Eigen::VectorXd ts = ch.t0.head(active) + s * h;
        stage(ts, ch.nodes[static_cast<std::size_t>(s)], a, h, &ja1);
        adj.leftCols(active) += ja1 * h.asDiagonal();
        check_finite(adj.leftCols(active), ch.cols, traj.batch_, "non-finite adjoint state");
        continue;
      }
      const Eigen::VectorXd half = 0.5 * h;
      const Eigen::VectorXd w1 = h / 6.0;
      const Eigen::VectorXd w2 = h / 3.0;
      const Eigen::VectorXd tau = ch.t0.head(active) + (s + 1) * h;
      const Eigen::Matrix2Xd xs = x.leftCols(active);
      const Eigen::Matrix2Xd f1 = stage(tau, xs, a, w1, &ja1);
      const Eigen::Matrix2Xd f2 =
          stage(tau - half, xs - f1 * half.asDiagonal(), a + ja1 * half.asDiagonal(), w2, &ja2);
      const Eigen::Matrix2Xd f3 =
          stage(tau - half, xs - f2 * half.asDiagonal(), a + ja2 * half.asDiagonal(), w2, &ja3);
      const Eigen::Matrix2Xd f4 = stage(tau - h, xs - f3 * h.asDiagonal(), a + ja3 * h.asDiagonal(), w1, &ja4);
      x.leftCols(active) -= (f1 + 2.0 * f2 + 2.0 * f3 + f4) * w1.asDiagonal();
      adj.leftCols(active) += (ja1 + 2.0 * ja2 + 2.0 * ja3 + ja4) * w1.asDiagonal();
      check_finite(adj.leftCols(active), ch.cols, traj.batch_, "non-finite adjoint state");
    }
  });
}

FlowNetParams backward(const FlowNetParams& params, const Trajectories& traj, const Eigen::Matrix2Xd& upstream) {
  return traj.config().backprop == Backprop::kDirect ? backward_direct(params, traj, upstream)
                                                     : backward_adjoint(params, traj, upstream);
}

}  // namespace warp
}  // namespace emoflow
