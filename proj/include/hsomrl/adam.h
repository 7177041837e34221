#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsomrl/matrix.h"

namespace hsomrl
{
    struct AdamConfig
    {
        double learning_rate = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    /// Bias-corrected Adam over a fixed list of parameter matrices.
    class Adam
    {
    public:
        Adam(AdamConfig config, std::span<const Matrix> params);

        /// params[i] -= lr * m_hat / (sqrt(v_hat) + eps)
        void step(std::span<Matrix> params, std::span<const Matrix> grads);

        std::uint64_t steps() const noexcept { return steps_; }
        const AdamConfig &config() const noexcept { return config_; }
        const std::vector<Matrix> &first_moments() const noexcept { return m_; }
        const std::vector<Matrix> &second_moments() const noexcept { return v_; }

    private:
        AdamConfig config_;
        std::vector<Matrix> m_;
        std::vector<Matrix> v_;
        std::uint64_t steps_ = 0;
    };
}
