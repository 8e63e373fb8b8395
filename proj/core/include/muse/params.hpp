#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "muse/config.hpp"
#include "muse/context.hpp"
#include "muse/paths.hpp"
#include "muse/prior.hpp"

namespace muse {

struct ModelShape {
  std::size_t num_relations = 0;
  std::size_t hidden = 0;
  std::size_t prior_dim = 0;
  std::size_t path_rows = 1;  // path vocabulary size + UNK
  std::size_t k_iters = 0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Named view of one parameter tensor (vectors appear as n x 1).
struct TensorRef {
  std::string name;
  Branch branch;
  Eigen::Map<Mat> values;
  std::size_t rank;  // 1 for vectors, 2 for matrices
};

struct ModelParams {
  PriorBranchParams prior;
  ContextBranchParams context;
  PathBranchParams path;

  static ModelParams zeros(const ModelShape& shape);

  /// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)) per tensor, seeded.
  /// Bias vectors start at zero.
  static ModelParams glorot(const ModelShape& shape, std::uint64_t seed);

  ModelShape shape() const;

  /// Every tensor in a fixed order: prior.*, context.*, path.*.
  std::vector<TensorRef> tensors();

  void set_zero();
  void add(const ModelParams& other);
  std::size_t parameter_count();
};

/// Adam with bias-corrected moments.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelShape& shape, double lr, double beta1, double beta2, double epsilon);

  /// One update. Tensors of branches outside `active` are left untouched.
  void step(ModelParams& params, ModelParams& grad, BranchMask active);

  std::uint64_t steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::uint64_t t_ = 0;
  ModelParams m_;
  ModelParams v_;
};

}  // namespace muse
