#include "mario/optim.hpp"

#include <cmath>

#include "mario/error.hpp"

namespace mario {

OptState init_opt_state(std::span<const Matrix* const> shapes, const AdamConfig& hp) {
  OptState s;
  s.hp = hp;
  for (const Matrix* t : shapes) {
    s.m.push_back(Matrix::Zero(t->rows(), t->cols()));
    s.v.push_back(Matrix::Zero(t->rows(), t->cols()));
  }
  return s;
}

OptState init_opt_state(const ModelParams& params, const AdamConfig& hp) {
  const auto shapes = tensors(params);
  return init_opt_state(shapes, hp);
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, OptState& opt) {
  if (params.size() != grads.size() || params.size() != opt.m.size() || params.size() != opt.v.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i];
    if (grads[i]->rows() != p.rows() || grads[i]->cols() != p.cols() || opt.m[i].rows() != p.rows() ||
        opt.m[i].cols() != p.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(i) + " shape mismatch");
    }
  }
  ++opt.step;
  const auto& hp = opt.hp;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = opt.m[i].array();
    auto v = opt.v[i].array();
    const auto g = grads[i]->array();
    m = hp.beta1 * m + (1.0 - hp.beta1) * g;
    v = hp.beta2 * v + (1.0 - hp.beta2) * g.square();
    params[i]->array() -= hp.lr * (m / c1) / ((v / c2).sqrt() + hp.eps);
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, OptState& opt) {
  std::vector<Matrix*> p;
  for (auto& t : tensors(params)) p.push_back(t.tensor);
  const auto g = tensors(grads);
  adam_step(p, g, opt);
}

}  // namespace mario
