#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgeo/catalog.hpp"
#include "mgeo/image.hpp"

namespace mgeo {

using Vec = std::vector<double>;

/// Lowercases and splits on maximal runs of non-alphanumeric ASCII bytes.
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
public:
    Vocab() = default;
    explicit Vocab(std::vector<std::string> tokens);  // sorts and dedups

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::optional<int> find(const std::string& token) const;
    /// Throws DomainError naming the token when it is out of vocabulary.
    int id(const std::string& token) const;
    std::vector<int> ids(const std::vector<std::string>& tokens) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Sorted union of the tokens of every name, description, the query and the
/// banned tokens. Throws ValidationError when fewer than 2 tokens result.
Vocab build_vocab(const Catalog& catalog, const std::vector<std::string>& banned_tokens);

/// Splits banned phrases ("must rank") into their member tokens.
std::vector<std::string> banned_unigrams(const std::vector<std::string>& phrases);

struct RankerConfig {
    std::uint64_t seed = 17;
    int embed_dim = 8;
    int patch_size = 32;
    int resolution = 32;
    double text_weight = 1.0;         // a
    double image_weight = 1.0;        // b
    double interaction_weight = 2.0;  // c
    double temperature = 0.25;        // τ
};

/// Ranker weights. Token embeddings are V×d, the patch projection is
/// (3·P·P)×d, both row-major and drawn uniform in [-1/√d, 1/√d] from
/// mt19937_64(seed): embeddings first, then the projection, each value
/// r·(2u − 1) with u = (draw >> 11)·2⁻⁵³.
struct RankerParams {
    RankerConfig config;
    std::size_t vocab_size = 0;
    Vec embeddings;
    Vec patch_projection;

    static RankerParams initialize(const RankerConfig& config, std::size_t vocab_size);

    int dim() const { return config.embed_dim; }
    int patch_features() const { return 3 * config.patch_size * config.patch_size; }
    std::span<const double> embedding(std::size_t token) const {
        return {embeddings.data() + token * config.embed_dim, static_cast<std::size_t>(config.embed_dim)};
    }
};

/// Continuous relaxation of an adversarial suffix: one row of vocabulary
/// logits per suffix position.
struct SuffixLogits {
    int length = 0;
    int vocab_size = 0;
    Vec data;

    SuffixLogits() = default;
    SuffixLogits(int l, int v, double fill = 0.0)
        : length(l), vocab_size(v), data(static_cast<std::size_t>(l) * v, fill) {}

    std::span<double> row(int pos) { return {data.data() + static_cast<std::size_t>(pos) * vocab_size, static_cast<std::size_t>(vocab_size)}; }
    std::span<const double> row(int pos) const {
        return {data.data() + static_cast<std::size_t>(pos) * vocab_size, static_cast<std::size_t>(vocab_size)};
    }
    bool operator==(const SuffixLogits&) const = default;
};

/// Logits with `scale` at each token's id and 0 elsewhere.
SuffixLogits one_hot_logits(const std::vector<int>& tokens, int vocab_size, double scale);

Vec softmax(std::span<const double> logits);

// Text encoders. Empty input encodes to the zero vector.
Vec encode_text(const std::vector<int>& tokens, const RankerParams& params);
Vec encode_text(const SuffixLogits& logits, const RankerParams& params);
/// Mean over description tokens followed by suffix positions, soft or hard.
Vec encode_listing_text(const std::vector<int>& description, const SuffixLogits& suffix, const RankerParams& params);
Vec encode_listing_text(const std::vector<int>& description, const std::vector<int>& hard_suffix,
                        const RankerParams& params);

/// tanh of the mean over non-overlapping P×P patches of the patch projection
/// applied to each flattened patch. Patches flatten as (row, column, channel).
Vec encode_image(const Image& image, const RankerParams& params);

/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

struct ListingFeatures {
    Vec text;
    Vec image;
};

/// Encoded catalog: query feature plus per-listing text and image features.
struct Scene {
    Vec query;
    std::vector<ListingFeatures> listings;
};

Scene encode_scene(const Catalog& catalog, const Vocab& vocab, const RankerParams& params);

double score_listing(const Vec& query, const ListingFeatures& listing, const RankerConfig& config);
Vec score_products(const Scene& scene, const RankerParams& params);

struct RankingResult {
    std::vector<std::size_t> permutation;  // 0-based indices, best first
    Vec scores;
    double sequence_nll = 0.0;

    /// 1-based rank of listing `index`.
    int rank_of(std::size_t index) const;
};

/// Sort by score descending; ties go to the lower catalog index.
std::vector<std::size_t> order_by_score(const Vec& scores);
RankingResult rank_scores(const Vec& scores, double temperature);
RankingResult rank(const Scene& scene, const RankerParams& params);

/// Plackett–Luce negative log-likelihood of `permutation` under scores/τ.
double plackett_luce_nll(std::span<const double> scores, std::span<const std::size_t> permutation,
                         double temperature);
/// d nll / d scores.
Vec plackett_luce_grad(std::span<const double> scores, std::span<const std::size_t> permutation,
                       double temperature);

/// Laplace-smoothed bigram model with a begin-of-sequence state at index V.
class BigramLM {
public:
    BigramLM() = default;
    BigramLM(const std::vector<std::vector<int>>& sequences, std::size_t vocab_size, double smoothing = 1.0);

    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t bos() const { return vocab_size_; }
    double smoothing() const { return smoothing_; }
    double prob(std::size_t next, std::size_t prev) const;
    /// −log p(next | prev); rows indexed by prev (V rows plus BOS).
    double cost(std::size_t next, std::size_t prev) const { return cost_[prev * vocab_size_ + next]; }

private:
    std::size_t vocab_size_ = 0;
    double smoothing_ = 1.0;
    Vec prob_;
    Vec cost_;
};

/// Fits on the tokenized descriptions of every listing.
BigramLM fit_bigram_lm(const Catalog& catalog, const Vocab& vocab, double smoothing = 1.0);

/// Expected bigram surprisal of the suffix following `context`.
double fluency_nll(const SuffixLogits& logits, const std::vector<int>& context, const BigramLM& lm);
SuffixLogits fluency_grad(const SuffixLogits& logits, const std::vector<int>& context, const BigramLM& lm);

/// Expected count of banned tokens over suffix positions.
double ngram_penalty(const SuffixLogits& logits, const std::vector<int>& banned);
SuffixLogits ngram_grad(const SuffixLogits& logits, const std::vector<int>& banned);

/// Resolves banned unigrams to ids; throws DomainError for tokens missing
/// from the vocabulary.
std::vector<int> banned_ids(const Vocab& vocab, const std::vector<std::string>& banned);

}  // namespace mgeo
