#include <cmath>

#include "mgeo/error.hpp"
#include "mgeo/text_attack.hpp"

namespace mgeo {

void TextAttackConfig::validate() const {
    if (suffix_length < 0) throw ValidationError("suffix length must be >= 0");
    if (steps < 0) throw ValidationError("text steps must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("text learning rate must be > 0");
    if (!(lambda_fluency >= 0.0) || !(lambda_ngram >= 0.0)) throw ValidationError("text loss weights must be >= 0");
}

SuffixLogits init_suffix(const std::vector<int>& description_tokens, std::size_t vocab_size,
                         const TextAttackConfig& config) {
    SuffixLogits logits(config.suffix_length, static_cast<int>(vocab_size));
    if (config.init == SuffixInit::Uniform) return logits;
    if (description_tokens.empty()) {
        if (config.suffix_length > 0) warn("empty description; suffix initialized uniformly");
        return logits;
    }
    for (int j = 0; j < config.suffix_length; ++j) {
        logits.row(j)[description_tokens[j % description_tokens.size()]] = kInitLogit;
    }
    return logits;
}

namespace {

struct TextEval {
    TextLoss loss;
    SuffixLogits grad;
};

TextEval evaluate_text(const AttackSetup& setup, const Image& image, const SuffixLogits& suffix,
                       const TextAttackConfig& config, bool with_grad) {
    TargetState state{image, suffix, std::nullopt};
    LossGrad ranking = setup.objective->loss_and_grads(state, with_grad ? Wrt::Suffix : Wrt::None);
    TextEval out;
    out.loss.target = ranking.loss;
    out.loss.fluency = fluency_nll(suffix, setup.description_tokens, *setup.lm);
    out.loss.ngram = ngram_penalty(suffix, setup.banned);
    out.loss.total = out.loss.target + config.lambda_fluency * out.loss.fluency + config.lambda_ngram * out.loss.ngram;
    if (with_grad) {
        out.grad = std::move(ranking.grad_suffix);
        if (suffix.length > 0) {
            const SuffixLogits fg = fluency_grad(suffix, setup.description_tokens, *setup.lm);
            const SuffixLogits ng = ngram_grad(suffix, setup.banned);
            for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
                out.grad.data[i] += config.lambda_fluency * fg.data[i] + config.lambda_ngram * ng.data[i];
            }
        }
    }
    return out;
}

}  // namespace

TextLoss text_loss(const AttackSetup& setup, const Image& image, const SuffixLogits& suffix,
                   const TextAttackConfig& config) {
    return evaluate_text(setup, image, suffix, config, false).loss;
}

TextOptimizationResult optimize_suffix(const AttackSetup& setup, const Image& image, const SuffixLogits& initial,
                                       const TextAttackConfig& config, const TextStepHook& hook) {
    config.validate();
    TextOptimizationResult result{initial, {}, 0};
    if (config.steps == 0) return result;

    SuffixLogits current = initial;
    double best = INFINITY;
    for (int step = 0; step <= config.steps; ++step) {
        const bool last = step == config.steps;
        if (hook) hook(step, image);
        TextEval eval = evaluate_text(setup, image, current, config, !last);
        if (!std::isfinite(eval.loss.total)) {
            throw AbortError("text attack: non-finite loss at step " + std::to_string(step));
        }
        result.trace.push_back({step, eval.loss});
        if (eval.loss.total < best) {
            best = eval.loss.total;
            result.logits = current;
            result.best_step = step;
        }
        if (last) break;
        for (std::size_t i = 0; i < current.data.size(); ++i) current.data[i] -= config.learning_rate * eval.grad.data[i];
    }
    return result;
}

std::vector<int> decode_tokens(const SuffixLogits& logits) {
    std::vector<int> tokens;
    for (int pos = 0; pos < logits.length; ++pos) {
        const auto row = logits.row(pos);
        int best = 0;
        for (int w = 1; w < logits.vocab_size; ++w) {
            if (row[w] > row[best]) best = w;
        }
        tokens.push_back(best);
    }
    return tokens;
}

std::string join_tokens(const std::vector<int>& tokens, const Vocab& vocab) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(tokens[i]);
    }
    return out;
}

std::string decode_suffix(const SuffixLogits& logits, const Vocab& vocab) { return join_tokens(decode_tokens(logits), vocab); }

}  // namespace mgeo
