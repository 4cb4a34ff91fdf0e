#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace coea {

// Mutable flat view over one named trainable tensor. Param structs expose
// their tensors in a fixed order through these, which is what the optimizers
// and the finite-difference checks iterate over.
struct ParamView {
    std::string name;
    double* data;
    size_t size;
};

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam moments over a fixed view layout; the first step sizes the buffers.
class AdamState {
public:
    void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads,
              const AdamConfig& cfg) {
        if (m_.empty()) {
            for (const auto& v : params) {
                m_.emplace_back(v.size, 0.0);
                v_.emplace_back(v.size, 0.0);
            }
        }
        t_ += 1.0;
        double bc1 = 1.0 - std::pow(cfg.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg.beta2, t_);
        for (size_t i = 0; i < params.size(); ++i)
            for (size_t j = 0; j < params[i].size; ++j) {
                double g = grads[i].data[j];
                m_[i][j] = cfg.beta1 * m_[i][j] + (1.0 - cfg.beta1) * g;
                v_[i][j] = cfg.beta2 * v_[i][j] + (1.0 - cfg.beta2) * g * g;
                params[i].data[j] -=
                    cfg.lr * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + cfg.eps);
            }
    }

private:
    std::vector<std::vector<double>> m_, v_;
    double t_ = 0.0;
};

}  // namespace coea
