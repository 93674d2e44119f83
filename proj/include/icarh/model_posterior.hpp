#pragma once

#include "icarh/model_core.hpp"
#include "icarh/sampler.hpp"

namespace icarh {

// Adapts the model to the sampler's target interface. The zero vector in
// unconstrained coordinates is the prior-median-derived init center:
// phi at interval midpoints, unit variances, lambda = sigma_beta = 1 and
// all location parameters at zero.
class ModelPosterior : public Posterior {
public:
  explicit ModelPosterior(const Model& model) : model_(model) {}

  int dim() const override { return model_.dims().dim; }
  double value_and_grad(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override {
    return model_.value_and_grad(z, grad);
  }
  std::vector<std::string> parameter_names() const override { return model_.parameter_names(); }
  Eigen::VectorXd constrain(const Eigen::VectorXd& z) const override {
    return model_.untransform(z);
  }

private:
  const Model& model_;
};

}  // namespace icarh
