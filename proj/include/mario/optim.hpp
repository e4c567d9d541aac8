#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mario/model.hpp"

namespace mario {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct OptState {
  AdamConfig hp;
  std::int64_t step = 0;
  std::vector<Matrix> m;  // first moments, one per tensor
  std::vector<Matrix> v;  // second moments
};

/// Zero moments shaped like `shapes`.
OptState init_opt_state(std::span<const Matrix* const> shapes, const AdamConfig& hp);
OptState init_opt_state(const ModelParams& params, const AdamConfig& hp);

/// One bias-corrected Adam update. Throws ShapeMismatch when the tensor lists
/// or their shapes disagree.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, OptState& opt);
void adam_step(ModelParams& params, const ModelParams& grads, OptState& opt);

}  // namespace mario
