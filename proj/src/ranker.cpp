#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mgeo/error.hpp"
#include "mgeo/ranker.hpp"

namespace mgeo {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            current.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    std::sort(tokens_.begin(), tokens_.end());
    tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

std::optional<int> Vocab::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocab::id(const std::string& token) const {
    auto found = find(token);
    if (!found) throw DomainError("token \"" + token + "\" is not in the vocabulary");
    return *found;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

std::vector<std::string> banned_unigrams(const std::vector<std::string>& phrases) {
    std::set<std::string> unique;
    for (const auto& phrase : phrases) {
        for (auto& t : tokenize(phrase)) unique.insert(std::move(t));
    }
    return {unique.begin(), unique.end()};
}

Vocab build_vocab(const Catalog& catalog, const std::vector<std::string>& banned_tokens) {
    std::vector<std::string> all;
    auto add = [&all](const std::string& text) {
        for (auto& t : tokenize(text)) all.push_back(std::move(t));
    };
    for (const auto& p : catalog.products) {
        add(p.name);
        add(p.description);
    }
    add(catalog.query);
    for (const auto& b : banned_tokens) add(b);
    Vocab vocab(std::move(all));
    if (vocab.size() < 2) {
        throw ValidationError("degenerate corpus: vocabulary would have " + std::to_string(vocab.size()) +
                              " token(s), need at least 2");
    }
    return vocab;
}

RankerParams RankerParams::initialize(const RankerConfig& config, std::size_t vocab_size) {
    if (!(config.temperature > 0.0)) throw DomainError("temperature must be positive");
    if (config.embed_dim <= 0 || config.patch_size <= 0) throw DomainError("embed_dim and patch_size must be positive");
    RankerParams params;
    params.config = config;
    params.vocab_size = vocab_size;
    std::mt19937_64 engine(config.seed);
    const double r = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    auto draw = [&] {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        return r * (2.0 * u - 1.0);
    };
    params.embeddings.resize(vocab_size * config.embed_dim);
    for (double& v : params.embeddings) v = draw();
    params.patch_projection.resize(static_cast<std::size_t>(params.patch_features()) * config.embed_dim);
    for (double& v : params.patch_projection) v = draw();
    return params;
}

SuffixLogits one_hot_logits(const std::vector<int>& tokens, int vocab_size, double scale) {
    SuffixLogits logits(static_cast<int>(tokens.size()), vocab_size);
    for (std::size_t i = 0; i < tokens.size(); ++i) logits.row(static_cast<int>(i))[tokens[i]] = scale;
    return logits;
}

Vec softmax(std::span<const double> logits) {
    Vec out(logits.size());
    if (logits.empty()) return out;
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

namespace {

void add_scaled(Vec& acc, std::span<const double> row, double weight) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += weight * row[k];
}

void add_soft_rows(Vec& acc, const SuffixLogits& logits, const RankerParams& params) {
    for (int pos = 0; pos < logits.length; ++pos) {
        const Vec p = softmax(logits.row(pos));
        for (std::size_t w = 0; w < p.size(); ++w) add_scaled(acc, params.embedding(w), p[w]);
    }
}

void check_logits(const SuffixLogits& logits, const RankerParams& params) {
    if (logits.length > 0 && static_cast<std::size_t>(logits.vocab_size) != params.vocab_size) {
        throw DomainError("suffix logits vocabulary size does not match ranker");
    }
}

void check_token(int t, const RankerParams& params) {
    if (t < 0 || static_cast<std::size_t>(t) >= params.vocab_size) throw DomainError("token id out of range");
}

}  // namespace

Vec encode_text(const std::vector<int>& tokens, const RankerParams& params) {
    Vec out(params.dim(), 0.0);
    if (tokens.empty()) return out;
    for (int t : tokens) {
        check_token(t, params);
        add_scaled(out, params.embedding(t), 1.0);
    }
    for (double& v : out) v /= static_cast<double>(tokens.size());
    return out;
}

Vec encode_text(const SuffixLogits& logits, const RankerParams& params) {
    return encode_listing_text({}, logits, params);
}

Vec encode_listing_text(const std::vector<int>& description, const SuffixLogits& suffix, const RankerParams& params) {
    check_logits(suffix, params);
    Vec out(params.dim(), 0.0);
    const std::size_t count = description.size() + suffix.length;
    if (count == 0) return out;
    for (int t : description) {
        check_token(t, params);
        add_scaled(out, params.embedding(t), 1.0);
    }
    add_soft_rows(out, suffix, params);
    for (double& v : out) v /= static_cast<double>(count);
    return out;
}

Vec encode_listing_text(const std::vector<int>& description, const std::vector<int>& hard_suffix,
                        const RankerParams& params) {
    std::vector<int> all = description;
    all.insert(all.end(), hard_suffix.begin(), hard_suffix.end());
    return encode_text(all, params);
}

Vec encode_image(const Image& image, const RankerParams& params) {
    const int p = params.config.patch_size;
    const int d = params.dim();
    if (image.channels != 3) throw DomainError("encode_image expects an RGB image");
    if (image.height % p != 0 || image.width % p != 0) {
        throw DomainError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " is not divisible by patch size " + std::to_string(p));
    }
    const int patches = (image.height / p) * (image.width / p);
    Vec u(d, 0.0);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const int local = (y % p) * p + (x % p);
            for (int c = 0; c < 3; ++c) {
                const double v = image.at(y, x, c);
                if (v == 0.0) continue;
                const double* w = params.patch_projection.data() + static_cast<std::size_t>(local * 3 + c) * d;
                for (int k = 0; k < d; ++k) u[k] += v * w[k];
            }
        }
    }
    for (double& v : u) v = std::tanh(v / patches);
    return u;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Scene encode_scene(const Catalog& catalog, const Vocab& vocab, const RankerParams& params) {
    Scene scene;
    scene.query = encode_text(vocab.ids(tokenize(catalog.query)), params);
    for (const auto& p : catalog.products) {
        scene.listings.push_back({encode_text(vocab.ids(tokenize(p.description)), params), encode_image(p.image, params)});
    }
    return scene;
}

double score_listing(const Vec& query, const ListingFeatures& listing, const RankerConfig& config) {
    const double ct = cosine(query, listing.text);
    const double cv = cosine(query, listing.image);
    return config.text_weight * ct + config.image_weight * cv + config.interaction_weight * ct * cv;
}

Vec score_products(const Scene& scene, const RankerParams& params) {
    Vec scores;
    scores.reserve(scene.listings.size());
    for (const auto& l : scene.listings) scores.push_back(score_listing(scene.query, l, params.config));
    return scores;
}

int RankingResult::rank_of(std::size_t index) const {
    for (std::size_t k = 0; k < permutation.size(); ++k) {
        if (permutation[k] == index) return static_cast<int>(k) + 1;
    }
    throw DomainError("index not in ranking");
}

std::vector<std::size_t> order_by_score(const Vec& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });
    return order;
}

RankingResult rank_scores(const Vec& scores, double temperature) {
    RankingResult result;
    result.scores = scores;
    result.permutation = order_by_score(scores);
    result.sequence_nll = plackett_luce_nll(scores, result.permutation, temperature);
    return result;
}

RankingResult rank(const Scene& scene, const RankerParams& params) {
    return rank_scores(score_products(scene, params), params.config.temperature);
}

namespace {

void check_permutation(std::size_t n, std::span<const std::size_t> permutation) {
    if (permutation.size() != n) throw DomainError("permutation length does not match score count");
    std::vector<bool> seen(n, false);
    for (std::size_t idx : permutation) {
        if (idx >= n || seen[idx]) throw DomainError("invalid permutation");
        seen[idx] = true;
    }
}

}  // namespace

double plackett_luce_nll(std::span<const double> scores, std::span<const std::size_t> permutation,
                         double temperature) {
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    check_permutation(scores.size(), permutation);
    double nll = 0.0;
    for (std::size_t k = 0; k < permutation.size(); ++k) {
        double top = -INFINITY;
        for (std::size_t j = k; j < permutation.size(); ++j) top = std::max(top, scores[permutation[j]] / temperature);
        double total = 0.0;
        for (std::size_t j = k; j < permutation.size(); ++j) total += std::exp(scores[permutation[j]] / temperature - top);
        nll += top + std::log(total) - scores[permutation[k]] / temperature;
    }
    return nll;
}

Vec plackett_luce_grad(std::span<const double> scores, std::span<const std::size_t> permutation,
                       double temperature) {
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    check_permutation(scores.size(), permutation);
    const std::size_t n = permutation.size();
    Vec grad(scores.size(), 0.0);
    Vec weights(n);
    for (std::size_t k = 0; k < n; ++k) {
        double top = -INFINITY;
        for (std::size_t j = k; j < n; ++j) top = std::max(top, scores[permutation[j]] / temperature);
        double total = 0.0;
        for (std::size_t j = k; j < n; ++j) {
            weights[j] = std::exp(scores[permutation[j]] / temperature - top);
            total += weights[j];
        }
        for (std::size_t j = k; j < n; ++j) grad[permutation[j]] += weights[j] / total / temperature;
        grad[permutation[k]] -= 1.0 / temperature;
    }
    return grad;
}

BigramLM::BigramLM(const std::vector<std::vector<int>>& sequences, std::size_t vocab_size, double smoothing)
    : vocab_size_(vocab_size), smoothing_(smoothing) {
    if (!(smoothing > 0.0)) throw DomainError("smoothing must be positive");
    const std::size_t states = vocab_size + 1;
    Vec counts(states * vocab_size, 0.0);
    Vec totals(states, 0.0);
    for (const auto& seq : sequences) {
        std::size_t prev = bos();
        for (int t : seq) {
            counts[prev * vocab_size + t] += 1.0;
            totals[prev] += 1.0;
            prev = static_cast<std::size_t>(t);
        }
    }
    prob_.resize(counts.size());
    cost_.resize(counts.size());
    for (std::size_t u = 0; u < states; ++u) {
        const double denom = totals[u] + smoothing * static_cast<double>(vocab_size);
        for (std::size_t w = 0; w < vocab_size; ++w) {
            prob_[u * vocab_size + w] = (counts[u * vocab_size + w] + smoothing) / denom;
            cost_[u * vocab_size + w] = -std::log(prob_[u * vocab_size + w]);
        }
    }
}

double BigramLM::prob(std::size_t next, std::size_t prev) const { return prob_[prev * vocab_size_ + next]; }

BigramLM fit_bigram_lm(const Catalog& catalog, const Vocab& vocab, double smoothing) {
    std::vector<std::vector<int>> sequences;
    for (const auto& p : catalog.products) sequences.push_back(vocab.ids(tokenize(p.description)));
    return BigramLM(sequences, vocab.size(), smoothing);
}

namespace {

std::vector<Vec> row_softmaxes(const SuffixLogits& logits) {
    std::vector<Vec> probs;
    probs.reserve(logits.length);
    for (int pos = 0; pos < logits.length; ++pos) probs.push_back(softmax(logits.row(pos)));
    return probs;
}

// Pulls d/dp back through a row softmax: dz = p ⊙ (a − p·a).
void softmax_backward(const Vec& p, const Vec& upstream, std::span<double> out) {
    double mean = 0.0;
    for (std::size_t w = 0; w < p.size(); ++w) mean += p[w] * upstream[w];
    for (std::size_t w = 0; w < p.size(); ++w) out[w] = p[w] * (upstream[w] - mean);
}

void check_lm(const SuffixLogits& logits, const BigramLM& lm) {
    if (logits.length > 0 && static_cast<std::size_t>(logits.vocab_size) != lm.vocab_size()) {
        throw DomainError("suffix logits vocabulary size does not match language model");
    }
}

}  // namespace

double fluency_nll(const SuffixLogits& logits, const std::vector<int>& context, const BigramLM& lm) {
    check_lm(logits, lm);
    const std::size_t V = lm.vocab_size();
    const std::size_t first_prev = context.empty() ? lm.bos() : static_cast<std::size_t>(context.back());
    const auto probs = row_softmaxes(logits);
    double total = 0.0;
    for (int pos = 0; pos < logits.length; ++pos) {
        const Vec& p = probs[pos];
        if (pos == 0) {
            for (std::size_t w = 0; w < V; ++w) total += p[w] * lm.cost(w, first_prev);
        } else {
            const Vec& prev = probs[pos - 1];
            for (std::size_t u = 0; u < V; ++u) {
                if (prev[u] == 0.0) continue;
                double inner = 0.0;
                for (std::size_t w = 0; w < V; ++w) inner += p[w] * lm.cost(w, u);
                total += prev[u] * inner;
            }
        }
    }
    return total;
}

SuffixLogits fluency_grad(const SuffixLogits& logits, const std::vector<int>& context, const BigramLM& lm) {
    check_lm(logits, lm);
    const std::size_t V = lm.vocab_size();
    const std::size_t first_prev = context.empty() ? lm.bos() : static_cast<std::size_t>(context.back());
    const auto probs = row_softmaxes(logits);
    SuffixLogits grad(logits.length, logits.vocab_size);
    Vec upstream(V);
    for (int pos = 0; pos < logits.length; ++pos) {
        std::fill(upstream.begin(), upstream.end(), 0.0);
        // As the "next" token of the pair (pos-1, pos).
        if (pos == 0) {
            for (std::size_t w = 0; w < V; ++w) upstream[w] += lm.cost(w, first_prev);
        } else {
            const Vec& prev = probs[pos - 1];
            for (std::size_t u = 0; u < V; ++u) {
                if (prev[u] == 0.0) continue;
                for (std::size_t w = 0; w < V; ++w) upstream[w] += prev[u] * lm.cost(w, u);
            }
        }
        // As the "previous" token of the pair (pos, pos+1).
        if (pos + 1 < logits.length) {
            const Vec& next = probs[pos + 1];
            for (std::size_t u = 0; u < V; ++u) {
                double inner = 0.0;
                for (std::size_t w = 0; w < V; ++w) inner += next[w] * lm.cost(w, u);
                upstream[u] += inner;
            }
        }
        softmax_backward(probs[pos], upstream, grad.row(pos));
    }
    return grad;
}

double ngram_penalty(const SuffixLogits& logits, const std::vector<int>& banned) {
    double total = 0.0;
    for (int pos = 0; pos < logits.length; ++pos) {
        const Vec p = softmax(logits.row(pos));
        for (int b : banned) total += p.at(b);
    }
    return total;
}

SuffixLogits ngram_grad(const SuffixLogits& logits, const std::vector<int>& banned) {
    SuffixLogits grad(logits.length, logits.vocab_size);
    Vec upstream(logits.vocab_size, 0.0);
    for (int b : banned) upstream.at(b) = 1.0;
    for (int pos = 0; pos < logits.length; ++pos) {
        softmax_backward(softmax(logits.row(pos)), upstream, grad.row(pos));
    }
    return grad;
}

std::vector<int> banned_ids(const Vocab& vocab, const std::vector<std::string>& banned) {
    std::vector<int> ids;
    for (const auto& token : banned) {
        auto found = vocab.find(token);
        if (!found) throw DomainError("banned token \"" + token + "\" is missing from the vocabulary");
        ids.push_back(*found);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace mgeo
