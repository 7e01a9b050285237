#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mgeo/objective.hpp"

namespace mgeo {

enum class SuffixInit { DescriptionPrefix, Uniform };

inline const std::vector<std::string>& default_banned_phrases() {
    static const std::vector<std::string> phrases = {"top", "must rank", "recommend", "recommended", "best"};
    return phrases;
}

struct TextAttackConfig {
    int suffix_length = 12;
    int steps = 100;
    double learning_rate = 0.5;
    double lambda_fluency = 0.1;
    double lambda_ngram = 1.0;
    std::vector<std::string> banned = default_banned_phrases();
    SuffixInit init = SuffixInit::Uniform;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TextLoss {
    double target = 0.0;
    double fluency = 0.0;
    double ngram = 0.0;
    double total = 0.0;
};

struct TextTraceRow {
    int step = 0;
    TextLoss loss;
};
using TextTrace = std::vector<TextTraceRow>;

inline constexpr double kInitLogit = 10.0;

/// Description-prefix mode peaks row j at the j-th description token
/// (cycling); uniform mode is all zeros. Empty descriptions fall back to
/// uniform with a warning.
SuffixLogits init_suffix(const std::vector<int>& description_tokens, std::size_t vocab_size,
                         const TextAttackConfig& config);

/// L_target + λ_f·fluency + λ_n·ngram with the image held at `image`.
TextLoss text_loss(const AttackSetup& setup, const Image& image, const SuffixLogits& suffix,
                   const TextAttackConfig& config);

struct TextOptimizationResult {
    SuffixLogits logits;  // best iterate
    TextTrace trace;
    int best_step = 0;
};

/// Observer called before each gradient evaluation with the step index and
/// the image the text gradient is taken against.
using TextStepHook = std::function<void(int step, const Image& image)>;

/// Plain gradient descent on suffix logits for `config.steps` updates,
/// keeping the lowest-loss iterate. The trace has steps + 1 rows (empty when
/// steps is 0). Throws AbortError on a non-finite loss.
TextOptimizationResult optimize_suffix(const AttackSetup& setup, const Image& image, const SuffixLogits& initial,
                                       const TextAttackConfig& config, const TextStepHook& hook = {});

/// Per-position argmax, ties to the lowest vocabulary index.
std::vector<int> decode_tokens(const SuffixLogits& logits);
std::string decode_suffix(const SuffixLogits& logits, const Vocab& vocab);
std::string join_tokens(const std::vector<int>& tokens, const Vocab& vocab);

}  // namespace mgeo
