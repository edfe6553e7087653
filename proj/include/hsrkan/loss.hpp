#pragma once

#include <vector>

#include <json.hpp>

#include "hsrkan/kan_layer.hpp"
#include "hsrkan/model.hpp"
#include "hsrkan/ops.hpp"

namespace hsrkan::loss {

struct LossConfig {
  double lambda = 1.0;
  double mu1 = 1.0;
  double mu2 = 1.0;

  void validate() const {
    if (lambda < 0.0 || mu1 < 0.0 || mu2 < 0.0) throw ConfigError("loss coefficients must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"lambda", c.lambda}, {"mu1", c.mu1}, {"mu2", c.mu2}};
}
inline void from_json(const nlohmann::json& j, LossConfig& c) {
  c = LossConfig{};
  c.lambda = j.value("lambda", c.lambda);
  c.mu1 = j.value("mu1", c.mu1);
  c.mu2 = j.value("mu2", c.mu2);
}

// Mean absolute reconstruction error.
inline Tensor l1_recon(const Tensor& predicted, const Tensor& target) { return ops::l1_mean(predicted, target); }

struct SparseTerms {
  Tensor l1_term;       // lambda * mu1 * sum_l |Phi_l|_1
  Tensor entropy_term;  // lambda * mu2 * sum_l S(Phi_l)
  Tensor total;
};

/// lambda (mu1 sum_l |Phi_l|_1 + mu2 sum_l S(Phi_l)) over the given KAN layers,
/// using the statistics of their last collecting forward pass.
inline SparseTerms sparse_loss(const std::vector<const kan::KanLayer*>& layers, const LossConfig& cfg) {
  cfg.validate();
  Tensor l1_sum = Tensor::scalar(0.0);
  Tensor entropy_sum = Tensor::scalar(0.0);
  for (const kan::KanLayer* layer : layers) {
    l1_sum = ops::add(l1_sum, kan::layer_l1(*layer));
    entropy_sum = ops::add(entropy_sum, kan::layer_entropy(*layer));
  }
  SparseTerms t;
  t.l1_term = ops::scale(l1_sum, cfg.lambda * cfg.mu1);
  t.entropy_term = ops::scale(entropy_sum, cfg.lambda * cfg.mu2);
  t.total = ops::add(t.l1_term, t.entropy_term);
  return t;
}

struct LossTerms {
  Tensor total;
  double l1 = 0.0;
  double sparse_l1 = 0.0;
  double sparse_entropy = 0.0;
};

/// l1_recon(Z, Z_true) + sparse_loss. The model's last forward must have
/// collected statistics when sparse is true.
inline LossTerms total_loss(const Tensor& predicted, const Tensor& target, const model::HsrKanModel& net,
                            const LossConfig& cfg, bool sparse = true) {
  LossTerms out;
  const Tensor recon = l1_recon(predicted, target);
  out.l1 = recon.item();
  if (!sparse) {
    out.total = recon;
    return out;
  }
  const SparseTerms s = sparse_loss(net.kan_layers(), cfg);
  out.sparse_l1 = s.l1_term.item();
  out.sparse_entropy = s.entropy_term.item();
  out.total = ops::add(recon, s.total);
  return out;
}

}  // namespace hsrkan::loss
