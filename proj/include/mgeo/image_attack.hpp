#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mgeo/objective.hpp"

namespace mgeo {

struct ImageAttackConfig {
    int steps = 300;
    double step_size = 1.0 / 255.0;
    double lambda_smooth = 5.0;
    double lambda_magnitude = 5.0;
    double foreground_weight = 2e-4;
    double background_weight = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Sum over channels of squared forward differences along both spatial
/// axes. No wraparound.
double smoothness_loss(const Image& delta);
Image smoothness_grad(const Image& delta);

/// Σ w(i,j)·|δ(i,j,c)| with w = foreground weight where the mask is 1.
double magnitude_loss(const Image& delta, const Mask& mask, double foreground_weight, double background_weight);
/// Subgradient w·sign(δ) with sign(0) = 0.
Image magnitude_grad(const Image& delta, const Mask& mask, double foreground_weight, double background_weight);

/// Anisotropic total variation Σ|forward differences|.
double total_variation(const Image& delta);

Image perturbation(const Image& adversarial, const Image& base);

struct ImageLoss {
    double target = 0.0;
    double smoothness = 0.0;
    double magnitude = 0.0;
    double total = 0.0;
};

struct ImageTraceRow {
    int step = 0;
    ImageLoss loss;
};
using ImageTrace = std::vector<ImageTraceRow>;

struct PerturbationStats {
    double linf = 0.0;
    double weighted_l1 = 0.0;
    double total_variation = 0.0;
};

PerturbationStats perturbation_stats(const Image& delta, const Mask& mask, const ImageAttackConfig& config);

/// L_target + λ_s·L_S + λ_m·L_M for the target image `image` with `suffix`
/// held fixed.
ImageLoss image_loss(const AttackSetup& setup, const Image& image, const TargetState& suffix,
                     const ImageAttackConfig& config);

/// clip_[0,1](image − α·sign(grad)), sign(0) = 0.
Image pgd_step(const Image& image, const Image& grad, double step_size);

struct ImageAttackResult {
    Image image;  // best iterate, unquantized
    ImageTrace trace;
    PerturbationStats stats;
    int best_step = 0;
};

/// Observer called before each gradient evaluation with the suffix state the
/// image gradient is taken against.
using ImageStepHook = std::function<void(int step, const TargetState& suffix)>;

/// Sign-gradient PGD on the target image, keeping the lowest-loss iterate.
/// `suffix` supplies the frozen text side; its image field is ignored.
ImageAttackResult attack_image(const AttackSetup& setup, const Image& initial, const TargetState& suffix,
                               const ImageAttackConfig& config, const ImageStepHook& hook = {});

}  // namespace mgeo
