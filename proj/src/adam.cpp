#include "hsomrl/adam.h"

#include <cmath>
#include <string>

#include "hsomrl/errors.h"

namespace hsomrl
{
    Adam::Adam(AdamConfig config, std::span<const Matrix> params) : config_{config}
    {
        if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0)
            || !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
            throw PreconditionError("Adam: invalid hyperparameters");
        }
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Matrix &p : params) {
            m_.emplace_back(p.rows(), p.cols(), 0.0);
            v_.emplace_back(p.rows(), p.cols(), 0.0);
        }
    }

    void Adam::step(std::span<Matrix> params, std::span<const Matrix> grads)
    {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw ShapeError("adam_step: expected " + std::to_string(m_.size()) + " parameters, got "
                             + std::to_string(params.size()) + " parameters and " + std::to_string(grads.size())
                             + " gradients");
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].same_shape(m_[i]) || !grads[i].same_shape(m_[i])) {
                throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape "
                                 + shape_string(params[i]) + ", gradient " + shape_string(grads[i])
                                 + ", state " + shape_string(m_[i]));
            }
        }

        ++steps_;
        const double b1 = config_.beta1;
        const double b2 = config_.beta2;
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i].data();
            auto g = grads[i].data();
            auto m = m_[i].data();
            auto v = v_[i].data();
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                const double m_hat = m[k] / c1;
                const double v_hat = v[k] / c2;
                p[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
            }
        }
    }
}
