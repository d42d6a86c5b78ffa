#include "emoflow/net.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "emoflow/binary_io.hpp"
#include "emoflow/error.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

namespace {

constexpr std::string_view kCheckpointMagic = "EMF1";
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

FlowNetParams::FlowNetParams(int hidden_width) : hidden_(hidden_width) {
  if (hidden_width < 1) throw ConfigError("hidden width must be positive");
  Eigen::Index offset = 0;
  for (int l = 0; l < kLayers; ++l) {
    w_offset_[l] = offset;
    offset += static_cast<Eigen::Index>(in_dim(l)) * out_dim(l);
    b_offset_[l] = offset;
    offset += out_dim(l);
  }
  data_ = Eigen::VectorXd::Zero(offset);
}

int FlowNetParams::in_dim(int layer) const {
  if (layer == 0) return kInputDim;
  if (layer == kSkipLayer) return hidden_ + kInputDim;
  return hidden_;
}

int FlowNetParams::out_dim(int layer) const { return layer == kLayers - 1 ? kOutputDim : hidden_; }

Eigen::Map<Eigen::MatrixXd> FlowNetParams::weight(int l) {
  return {data_.data() + w_offset_[l], out_dim(l), in_dim(l)};
}
Eigen::Map<const Eigen::MatrixXd> FlowNetParams::weight(int l) const {
  return {data_.data() + w_offset_[l], out_dim(l), in_dim(l)};
}
Eigen::Map<Eigen::VectorXd> FlowNetParams::bias(int l) { return {data_.data() + b_offset_[l], out_dim(l)}; }
Eigen::Map<const Eigen::VectorXd> FlowNetParams::bias(int l) const {
  return {data_.data() + b_offset_[l], out_dim(l)};
}

Eigen::Index FlowNetParams::parameter_count(int h) {
  const Eigen::Index hh = h;
  return 7 * hh * hh + 16 * hh + 2;
}

namespace net {

FlowNetParams init_params(std::uint64_t seed, int hidden_width) {
  FlowNetParams p(hidden_width);
  CounterRng rng(seed, /*stream=*/0x4e4554);
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.in_dim(l)));
    auto w = p.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
  }
  return p;
}

Eigen::Matrix2Xd forward_batch(const FlowNetParams& params, const Eigen::Ref<const Eigen::Matrix3Xd>& inputs,
                               ForwardCache* cache) {
  const int h = params.hidden_width();
  const Eigen::Index n = inputs.cols();
  if (cache) cache->input = inputs;

  Eigen::MatrixXd z(h, n);
  z.noalias() = params.weight(0) * inputs;
  z.colwise() += params.bias(0);
  if (cache) cache->pre[0] = z;
  Eigen::MatrixXd a = z.cwiseMax(0.0);

  for (int l = 1; l < FlowNetParams::kLayers - 1; ++l) {
    const auto w = params.weight(l);
    if (l == FlowNetParams::kSkipLayer) {
      z.noalias() = w.leftCols(h) * a;
      z.noalias() += w.rightCols(FlowNetParams::kInputDim) * inputs;
    } else {
      z.noalias() = w * a;
    }
    z.colwise() += params.bias(l);
    z += a;
    if (cache) cache->pre[static_cast<std::size_t>(l)] = z;
    a = z.cwiseMax(0.0);
  }

  Eigen::Matrix2Xd out(2, n);
  out.noalias() = params.weight(FlowNetParams::kLayers - 1) * a;
  out.colwise() += params.bias(FlowNetParams::kLayers - 1);
  return out;
}

void backward_batch(const FlowNetParams& params, const ForwardCache& cache,
                    const Eigen::Ref<const Eigen::Matrix2Xd>& upstream, FlowNetParams* grad_params,
                    Eigen::Matrix3Xd* grad_inputs, const Eigen::VectorXd* param_weights) {
  const int h = params.hidden_width();
  const Eigen::Index n = upstream.cols();
  constexpr int last = FlowNetParams::kLayers - 1;
  if (cache.input.cols() != n) throw ConfigError("backward_batch: cache/upstream batch mismatch");
  if (grad_params && !grad_params->same_shape(params)) throw ConfigError("backward_batch: gradient shape mismatch");
  if (grad_inputs) grad_inputs->setZero(3, n);

  auto weighted = [&](const auto& m) -> Eigen::MatrixXd {
    if (param_weights) return m * param_weights->asDiagonal();
    return m;
  };

  Eigen::MatrixXd a = cache.pre[last - 1].cwiseMax(0.0);
  if (grad_params) {
    const Eigen::MatrixXd g = weighted(upstream);
    grad_params->weight(last).noalias() += g * a.transpose();
    grad_params->bias(last) += g.rowwise().sum();
  }
  Eigen::MatrixXd da(h, n);
  da.noalias() = params.weight(last).transpose() * upstream;

  Eigen::MatrixXd dz(h, n);
  for (int l = last - 1; l >= 0; --l) {
    const auto& pre = cache.pre[static_cast<std::size_t>(l)];
    dz = (pre.array() > 0.0).select(da, 0.0);
    const auto w = params.weight(l);

    if (grad_params) {
      const Eigen::MatrixXd dzw = weighted(dz);
      auto gw = grad_params->weight(l);
      if (l == 0) {
        gw.noalias() += dzw * cache.input.transpose();
      } else {
        a = cache.pre[static_cast<std::size_t>(l - 1)].cwiseMax(0.0);
        if (l == FlowNetParams::kSkipLayer) {
          gw.leftCols(h).noalias() += dzw * a.transpose();
          gw.rightCols(FlowNetParams::kInputDim).noalias() += dzw * cache.input.transpose();
        } else {
          gw.noalias() += dzw * a.transpose();
        }
      }
      grad_params->bias(l) += dzw.rowwise().sum();
    }

    if (l == 0) {
      if (grad_inputs) grad_inputs->noalias() += w.transpose() * dz;
    } else if (l == FlowNetParams::kSkipLayer) {
      if (grad_inputs) grad_inputs->noalias() += w.rightCols(FlowNetParams::kInputDim).transpose() * dz;
      da.noalias() = w.leftCols(h).transpose() * dz;
      da += dz;
    } else {
      da.noalias() = w.transpose() * dz;
      da += dz;
    }
  }
}

Eigen::Vector2d forward(const FlowNetParams& params, const FlowQuery& q) {
  const Eigen::Vector3d in(q.t, q.x_n.x(), q.x_n.y());
  return forward_batch(params, in).col(0);
}

Gradients backward(const FlowNetParams& params, const FlowQuery& q, const Eigen::Vector2d& upstream) {
  const Eigen::Vector3d in(q.t, q.x_n.x(), q.x_n.y());
  ForwardCache cache;
  forward_batch(params, in, &cache);
  Gradients g{FlowNetParams(params.hidden_width()), Eigen::Vector2d::Zero()};
  Eigen::Matrix3Xd gin;
  backward_batch(params, cache, upstream, &g.params, &gin);
  g.x = gin.col(0).tail<2>();
  return g;
}

void save_checkpoint(std::ostream& os, const FlowNetParams& p) {
  bin::put_magic(os, kCheckpointMagic);
  bin::put<std::uint32_t>(os, kCheckpointVersion);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.hidden_width()));
  bin::put<std::uint32_t>(os, FlowNetParams::kLayers);
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.out_dim(l)));
    bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.in_dim(l)));
  }
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    const auto w = p.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) bin::put<double>(os, w(i, j));
    const auto b = p.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) bin::put<double>(os, b(i));
  }
}

FlowNetParams load_checkpoint(std::istream& is) {
  std::size_t offset = 0;
  bin::expect_magic(is, kCheckpointMagic, offset);
  const auto version = bin::get<std::uint32_t>(is, offset);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto hidden = bin::get<std::uint32_t>(is, offset);
  const auto layers = bin::get<std::uint32_t>(is, offset);
  if (hidden == 0 || hidden > (1u << 16) || layers != FlowNetParams::kLayers) {
    throw FormatError("checkpoint architecture does not match the flow network");
  }
  FlowNetParams p(static_cast<int>(hidden));
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    const auto out = bin::get<std::uint32_t>(is, offset);
    const auto in = bin::get<std::uint32_t>(is, offset);
    if (static_cast<int>(out) != p.out_dim(l) || static_cast<int>(in) != p.in_dim(l)) {
      throw FormatError("checkpoint layer " + std::to_string(l) + " has unexpected shape");
    }
  }
  for (int l = 0; l < FlowNetParams::kLayers; ++l) {
    auto w = p.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bin::get<double>(is, offset);
    auto b = p.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = bin::get<double>(is, offset);
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const FlowNetParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write checkpoint: " + path.string());
  save_checkpoint(os, params);
}

FlowNetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  return load_checkpoint(is);
}

}  // namespace net
}  // namespace emoflow
