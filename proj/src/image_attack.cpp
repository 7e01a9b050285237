#include <algorithm>
#include <cmath>

#include "mgeo/error.hpp"
#include "mgeo/image_attack.hpp"

namespace mgeo {

void ImageAttackConfig::validate() const {
    if (steps < 0) throw ValidationError("image steps must be >= 0");
    if (!(step_size > 0.0)) throw ValidationError("step size alpha must be > 0");
    if (!(lambda_smooth >= 0.0) || !(lambda_magnitude >= 0.0)) throw ValidationError("image loss weights must be >= 0");
    if (!(background_weight > 0.0) || !(foreground_weight >= background_weight)) {
        throw ValidationError("weights must satisfy foreground >= background > 0");
    }
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_mask(const Image& delta, const Mask& mask) {
    if (mask.height != delta.height || mask.width != delta.width || mask.channels != 1) {
        throw DomainError("mask dimensions do not match perturbation");
    }
}

}  // namespace

double smoothness_loss(const Image& delta) {
    double total = 0.0;
    for (int y = 0; y < delta.height; ++y) {
        for (int x = 0; x < delta.width; ++x) {
            for (int c = 0; c < delta.channels; ++c) {
                const double v = delta.at(y, x, c);
                if (y + 1 < delta.height) total += (delta.at(y + 1, x, c) - v) * (delta.at(y + 1, x, c) - v);
                if (x + 1 < delta.width) total += (delta.at(y, x + 1, c) - v) * (delta.at(y, x + 1, c) - v);
            }
        }
    }
    return total;
}

Image smoothness_grad(const Image& delta) {
    Image grad(delta.height, delta.width, delta.channels);
    for (int y = 0; y < delta.height; ++y) {
        for (int x = 0; x < delta.width; ++x) {
            for (int c = 0; c < delta.channels; ++c) {
                const double v = delta.at(y, x, c);
                if (y + 1 < delta.height) {
                    const double diff = delta.at(y + 1, x, c) - v;
                    grad.at(y + 1, x, c) += 2.0 * diff;
                    grad.at(y, x, c) -= 2.0 * diff;
                }
                if (x + 1 < delta.width) {
                    const double diff = delta.at(y, x + 1, c) - v;
                    grad.at(y, x + 1, c) += 2.0 * diff;
                    grad.at(y, x, c) -= 2.0 * diff;
                }
            }
        }
    }
    return grad;
}

double magnitude_loss(const Image& delta, const Mask& mask, double foreground_weight, double background_weight) {
    check_mask(delta, mask);
    double total = 0.0;
    for (int y = 0; y < delta.height; ++y) {
        for (int x = 0; x < delta.width; ++x) {
            const double w = mask.at(y, x) > 0.5 ? foreground_weight : background_weight;
            for (int c = 0; c < delta.channels; ++c) total += w * std::abs(delta.at(y, x, c));
        }
    }
    return total;
}

Image magnitude_grad(const Image& delta, const Mask& mask, double foreground_weight, double background_weight) {
    check_mask(delta, mask);
    Image grad(delta.height, delta.width, delta.channels);
    for (int y = 0; y < delta.height; ++y) {
        for (int x = 0; x < delta.width; ++x) {
            const double w = mask.at(y, x) > 0.5 ? foreground_weight : background_weight;
            for (int c = 0; c < delta.channels; ++c) grad.at(y, x, c) = w * sign(delta.at(y, x, c));
        }
    }
    return grad;
}

double total_variation(const Image& delta) {
    double total = 0.0;
    for (int y = 0; y < delta.height; ++y) {
        for (int x = 0; x < delta.width; ++x) {
            for (int c = 0; c < delta.channels; ++c) {
                if (y + 1 < delta.height) total += std::abs(delta.at(y + 1, x, c) - delta.at(y, x, c));
                if (x + 1 < delta.width) total += std::abs(delta.at(y, x + 1, c) - delta.at(y, x, c));
            }
        }
    }
    return total;
}

Image perturbation(const Image& adversarial, const Image& base) {
    if (!adversarial.same_shape(base)) throw DomainError("perturbation of mismatched images");
    Image delta = adversarial;
    for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] -= base.data[i];
    return delta;
}

PerturbationStats perturbation_stats(const Image& delta, const Mask& mask, const ImageAttackConfig& config) {
    PerturbationStats stats;
    for (double v : delta.data) stats.linf = std::max(stats.linf, std::abs(v));
    stats.weighted_l1 = magnitude_loss(delta, mask, config.foreground_weight, config.background_weight);
    stats.total_variation = total_variation(delta);
    return stats;
}

namespace {

struct ImageEval {
    ImageLoss loss;
    Image grad;
};

ImageEval evaluate_image(const AttackSetup& setup, const Image& image, const TargetState& suffix,
                         const ImageAttackConfig& config, bool with_grad) {
    TargetState state{image, suffix.suffix, suffix.hard_suffix};
    LossGrad ranking = setup.objective->loss_and_grads(state, with_grad ? Wrt::Image : Wrt::None);
    const Image delta = perturbation(image, setup.base_image);
    ImageEval out;
    out.loss.target = ranking.loss;
    out.loss.smoothness = smoothness_loss(delta);
    out.loss.magnitude = magnitude_loss(delta, setup.mask, config.foreground_weight, config.background_weight);
    out.loss.total = out.loss.target + config.lambda_smooth * out.loss.smoothness +
                     config.lambda_magnitude * out.loss.magnitude;
    if (with_grad) {
        out.grad = std::move(ranking.grad_image);
        const Image gs = smoothness_grad(delta);
        const Image gm = magnitude_grad(delta, setup.mask, config.foreground_weight, config.background_weight);
        for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
            out.grad.data[i] += config.lambda_smooth * gs.data[i] + config.lambda_magnitude * gm.data[i];
        }
    }
    return out;
}

}  // namespace

ImageLoss image_loss(const AttackSetup& setup, const Image& image, const TargetState& suffix,
                     const ImageAttackConfig& config) {
    return evaluate_image(setup, image, suffix, config, false).loss;
}

Image pgd_step(const Image& image, const Image& grad, double step_size) {
    if (!image.same_shape(grad)) throw DomainError("gradient shape does not match image");
    Image out = image;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::clamp(out.data[i] - step_size * sign(grad.data[i]), 0.0, 1.0);
    }
    return out;
}

ImageAttackResult attack_image(const AttackSetup& setup, const Image& initial, const TargetState& suffix,
                               const ImageAttackConfig& config, const ImageStepHook& hook) {
    config.validate();
    ImageAttackResult result{initial, {}, {}, 0};
    if (config.steps > 0) {
        Image current = initial;
        double best = INFINITY;
        for (int step = 0; step <= config.steps; ++step) {
            const bool last = step == config.steps;
            if (hook) hook(step, suffix);
            ImageEval eval = evaluate_image(setup, current, suffix, config, !last);
            if (!std::isfinite(eval.loss.total)) {
                throw AbortError("image attack: non-finite loss at step " + std::to_string(step));
            }
            result.trace.push_back({step, eval.loss});
            if (eval.loss.total < best) {
                best = eval.loss.total;
                result.image = current;
                result.best_step = step;
            }
            if (last) break;
            current = pgd_step(current, eval.grad, config.step_size);
        }
    }
    result.stats = perturbation_stats(perturbation(result.image, setup.base_image), setup.mask, config);
    return result;
}

}  // namespace mgeo
