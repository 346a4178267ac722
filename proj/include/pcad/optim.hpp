#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pcad/backbone.hpp"

namespace pcad {

// ADAM with bias correction. Moment buffers follow the tensor registry order
// of the parameters the optimizer was built for.
class Adam {
  public:
    Adam(BackboneParams& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& ref : trainable_tensors(params)) {
            m_.emplace_back(ref.data->size(), 0.0f);
            v_.emplace_back(ref.data->size(), 0.0f);
        }
    }

    void step(BackboneParams& params, BackboneGrads& grads, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        auto prefs = trainable_tensors(params);
        auto grefs = trainable_tensors(grads.shadow);
        for (size_t i = 0; i < prefs.size(); ++i) {
            auto& p = *prefs[i].data;
            const auto& g = *grefs[i].data;
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < p.size(); ++j) {
                double gj = g[j];
                double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
                double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
                m[j] = static_cast<float>(mj);
                v[j] = static_cast<float>(vj);
                p[j] -= static_cast<float>(lr * (mj / c1) / (std::sqrt(vj / c2) + eps_));
            }
        }
    }

    int64_t steps() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace pcad
