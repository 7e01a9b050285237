#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgeo/catalog.hpp"
#include "mgeo/ranker.hpp"

namespace mgeo {

enum class Wrt { None, Image, Suffix, Both };

/// The attacker-controlled content of the target listing.
struct TargetState {
    Image image;
    SuffixLogits suffix;
    /// When set, the suffix is evaluated as these discrete tokens and
    /// `suffix` is ignored.
    std::optional<std::vector<int>> hard_suffix;
};

struct LossGrad {
    double loss = 0.0;
    Vec scores;
    Image grad_image;          // empty unless requested
    SuffixLogits grad_suffix;  // empty unless requested
};

/// Ranking-side loss for one target: −log P(R* | catalog with the target
/// replaced by `state`), plus a hard re-ranking used for reporting.
class RankingObjective {
public:
    virtual ~RankingObjective() = default;
    virtual LossGrad loss_and_grads(const TargetState& state, Wrt wrt) const = 0;
    /// Ranks the catalog with the target carrying `image` and the discrete
    /// suffix appended to its description.
    virtual RankingResult evaluate(const Image& image, const std::vector<int>& hard_suffix) const = 0;
    /// Ranks the catalog with the target's description replaced outright.
    virtual RankingResult evaluate_description(const std::string& description, const Image& image) const = 0;
    virtual std::size_t vocab_size() const = 0;
};

/// Everything the toy ranker derives from one catalog; immutable once built.
struct ToyModel {
    Catalog catalog;  // at ranker resolution, masks filled in
    Vocab vocab;
    RankerParams params;
    BigramLM lm;
    Scene scene;
    RankingResult pre_ranking;
    std::vector<std::vector<int>> description_tokens;
    std::vector<std::string> banned;  // unigrams, all in vocab
    int raw_height = 0;  // listing image size before resampling
    int raw_width = 0;

    static ToyModel build(const Catalog& raw, const RankerConfig& config, const std::vector<std::string>& banned_phrases,
                          double mask_threshold = kDefaultBackgroundThreshold);
};

class ToyObjective final : public RankingObjective {
public:
    ToyObjective(const ToyModel& model, std::size_t target);

    LossGrad loss_and_grads(const TargetState& state, Wrt wrt) const override;
    RankingResult evaluate(const Image& image, const std::vector<int>& hard_suffix) const override;
    /// Tokens outside the vocabulary have no embedding and are dropped with a
    /// warning.
    RankingResult evaluate_description(const std::string& description, const Image& image) const override;
    std::size_t vocab_size() const override { return model_.vocab.size(); }

    const TargetSpec& spec() const { return spec_; }

private:
    const ToyModel& model_;
    std::size_t target_;
    TargetSpec spec_;
};

/// Toy-ranker loss and reverse-mode gradients for a target listing. Only the
/// target's image pixels and suffix logits are variables.
LossGrad loss_and_grads(const ToyModel& model, const TargetSpec& target, const TargetState& state, Wrt wrt);

}  // namespace mgeo

namespace mgeo {

/// Fixed inputs shared by the text and image attack loops for one target.
struct AttackSetup {
    std::shared_ptr<const RankingObjective> objective;
    const Vocab* vocab = nullptr;
    const BigramLM* lm = nullptr;
    std::size_t target = 0;
    std::string target_id;
    std::string description;
    std::vector<int> description_tokens;
    std::vector<int> banned;  // ids
    Image base_image;
    Mask mask;
    int pre_rank = 0;
    std::size_t catalog_size = 0;
};

AttackSetup make_toy_setup(const ToyModel& model, std::size_t target);

}  // namespace mgeo
