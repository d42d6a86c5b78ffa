#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <Eigen/Core>

namespace emoflow {

/// Weights of the implicit flow network (t, x, y) -> (u, v).
///
/// Layer graph (1-based layer numbers, h = hidden width):
///   z1 = W1 in + b1                         in = [t, x, y], 3 -> h
///   zk = Wk a(k-1) + bk + a(k-1)            k = 2..5, 7, 8 (residual add)
///   z6 = W6 [a5; in] + b6 + a5              skip concat, h+3 -> h
///   ak = relu(zk)                           k = 1..8
///   out = W9 a8 + b9                        h -> 2, no activation
///
/// All weights live in one flat vector so optimizers and checkpoints can treat
/// them uniformly. Weight blocks are column-major (out x in), each followed by
/// its bias.
class FlowNetParams {
 public:
  static constexpr int kLayers = 9;
  static constexpr int kInputDim = 3;
  static constexpr int kOutputDim = 2;
  static constexpr int kSkipLayer = 5;  // 0-based index of the layer fed [a5; in]

  explicit FlowNetParams(int hidden_width = 256);

  int hidden_width() const { return hidden_; }
  int in_dim(int layer) const;
  int out_dim(int layer) const;

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  Eigen::VectorXd& flat() { return data_; }
  const Eigen::VectorXd& flat() const { return data_; }
  Eigen::Index size() const { return data_.size(); }

  void set_zero() { data_.setZero(); }
  bool same_shape(const FlowNetParams& other) const { return hidden_ == other.hidden_; }

  /// 7h^2 + 16h + 2 for hidden width h.
  static Eigen::Index parameter_count(int hidden_width);

 private:
  int hidden_;
  std::array<Eigen::Index, kLayers> w_offset_{};
  std::array<Eigen::Index, kLayers> b_offset_{};
  Eigen::VectorXd data_;
};

struct FlowQuery {
  double t = 0.0;
  Eigen::Vector2d x_n = Eigen::Vector2d::Zero();
};

/// Intermediates of a batched forward pass, kept for the reverse pass.
struct ForwardCache {
  Eigen::Matrix3Xd input;                                   // 3 x B
  std::array<Eigen::MatrixXd, FlowNetParams::kLayers - 1> pre;  // h x B pre-activations
};

namespace net {

/// Deterministic uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
FlowNetParams init_params(std::uint64_t seed, int hidden_width = 256);

/// Batched forward: `inputs` is 3 x B with rows (t, x, y); returns 2 x B flow.
Eigen::Matrix2Xd forward_batch(const FlowNetParams& params, const Eigen::Ref<const Eigen::Matrix3Xd>& inputs,
                               ForwardCache* cache = nullptr);

/// Reverse pass of upstream^T out. Parameter gradients are accumulated into
/// `grad_params`; with `param_weights` each column's contribution to them is
/// scaled by the matching weight. `grad_inputs`, when given, receives the
/// unweighted 3 x B input gradient.
void backward_batch(const FlowNetParams& params, const ForwardCache& cache,
                    const Eigen::Ref<const Eigen::Matrix2Xd>& upstream, FlowNetParams* grad_params,
                    Eigen::Matrix3Xd* grad_inputs = nullptr,
                    const Eigen::VectorXd* param_weights = nullptr);

Eigen::Vector2d forward(const FlowNetParams& params, const FlowQuery& q);

struct Gradients {
  FlowNetParams params;
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
};

/// Gradients of upstream^T forward(params, q) with respect to params and q.x_n.
Gradients backward(const FlowNetParams& params, const FlowQuery& q, const Eigen::Vector2d& upstream);

/// EMF1 checkpoint: magic, version, hidden width, layer count, per-layer
/// (out, in) shapes, then each layer's row-major weights and bias as LE doubles.
void save_checkpoint(std::ostream& os, const FlowNetParams& params);
FlowNetParams load_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const FlowNetParams& params);
FlowNetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace net
}  // namespace emoflow
