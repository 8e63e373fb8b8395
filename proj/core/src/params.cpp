#include "muse/params.hpp"

#include <cmath>

#include "muse/random.hpp"

namespace muse {

namespace {

Eigen::Map<Mat> as_mat(Mat& m) { return {m.data(), m.rows(), m.cols()}; }
Eigen::Map<Mat> as_mat(Vec& v) { return {v.data(), v.size(), 1}; }

}  // namespace

ModelParams ModelParams::zeros(const ModelShape& s) {
  const auto r = static_cast<Eigen::Index>(s.num_relations);
  const auto h = static_cast<Eigen::Index>(s.hidden);
  const auto pd = static_cast<Eigen::Index>(s.prior_dim);
  ModelParams p;
  p.prior.w1 = Mat::Zero(2 * pd, h);
  p.prior.b1 = Vec::Zero(h);
  p.prior.w2 = Mat::Zero(h, r);
  p.prior.b2 = Vec::Zero(r);

  p.context.rel_embed = Mat::Zero(r, h);
  p.context.w.assign(s.k_iters, Mat::Zero(3 * h, h));
  p.context.b.assign(s.k_iters, Vec::Zero(h));
  p.context.w_pair = Mat::Zero(2 * h, h);
  p.context.b_pair = Vec::Zero(h);
  p.context.attn_proj = Mat::Zero(pd, h);
  p.context.out_proj = Mat::Zero(h, r);
  p.context.out_bias = Vec::Zero(r);

  p.path.path_embed = Mat::Zero(static_cast<Eigen::Index>(s.path_rows), h);
  p.path.out_proj = Mat::Zero(h, r);
  p.path.out_bias = Vec::Zero(r);
  return p;
}

ModelParams ModelParams::glorot(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = zeros(shape);
  SplitMix64 rng(mix_seed(seed, 0x1A17));
  for (auto& t : p.tensors()) {
    if (t.rank == 1) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(t.values.rows() + t.values.cols()));
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) {
      for (Eigen::Index i = 0; i < t.values.rows(); ++i) t.values(i, j) = rng.uniform(-a, a);
    }
  }
  return p;
}

ModelShape ModelParams::shape() const {
  ModelShape s;
  s.num_relations = static_cast<std::size_t>(prior.b2.size());
  s.hidden = static_cast<std::size_t>(context.rel_embed.cols());
  s.prior_dim = static_cast<std::size_t>(prior.w1.rows() / 2);
  s.path_rows = static_cast<std::size_t>(path.path_embed.rows());
  s.k_iters = context.w.size();
  return s;
}

std::vector<TensorRef> ModelParams::tensors() {
  std::vector<TensorRef> out;
  auto mat = [&](std::string name, Branch b, Mat& m) {
    out.push_back(TensorRef{std::move(name), b, as_mat(m), 2});
  };
  auto vec = [&](std::string name, Branch b, Vec& v) {
    out.push_back(TensorRef{std::move(name), b, as_mat(v), 1});
  };
  mat("prior.w1", Branch::kPrior, prior.w1);
  vec("prior.b1", Branch::kPrior, prior.b1);
  mat("prior.w2", Branch::kPrior, prior.w2);
  vec("prior.b2", Branch::kPrior, prior.b2);

  mat("context.rel_embed", Branch::kContext, context.rel_embed);
  for (std::size_t d = 0; d < context.w.size(); ++d) {
    mat("context.w" + std::to_string(d), Branch::kContext, context.w[d]);
    vec("context.b" + std::to_string(d), Branch::kContext, context.b[d]);
  }
  mat("context.w_pair", Branch::kContext, context.w_pair);
  vec("context.b_pair", Branch::kContext, context.b_pair);
  mat("context.attn_proj", Branch::kContext, context.attn_proj);
  mat("context.out_proj", Branch::kContext, context.out_proj);
  vec("context.out_bias", Branch::kContext, context.out_bias);

  mat("path.embed", Branch::kPath, path.path_embed);
  mat("path.out_proj", Branch::kPath, path.out_proj);
  vec("path.out_bias", Branch::kPath, path.out_bias);
  return out;
}

void ModelParams::set_zero() {
  for (auto& t : tensors()) t.values.setZero();
}

void ModelParams::add(const ModelParams& other) {
  auto mine = tensors();
  auto theirs = const_cast<ModelParams&>(other).tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i].values += theirs[i].values;
}

std::size_t ModelParams::parameter_count() {
  std::size_t n = 0;
  for (auto& t : tensors()) n += static_cast<std::size_t>(t.values.size());
  return n;
}

AdamOptimizer::AdamOptimizer(const ModelShape& shape, double lr, double beta1, double beta2,
                             double epsilon)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      m_(ModelParams::zeros(shape)),
      v_(ModelParams::zeros(shape)) {}

void AdamOptimizer::step(ModelParams& params, ModelParams& grad, BranchMask active) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = params.tensors();
  auto g = grad.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!active.has(p[i].branch)) continue;
    m[i].values = beta1_ * m[i].values + (1.0 - beta1_) * g[i].values;
    v[i].values = beta2_ * v[i].values + (1.0 - beta2_) * g[i].values.cwiseAbs2();
    p[i].values.array() -=
        lr_ * (m[i].values.array() / c1) / ((v[i].values.array() / c2).sqrt() + epsilon_);
  }
}

}  // namespace muse
