#include <cmath>

#include "mgeo/error.hpp"
#include "mgeo/objective.hpp"

namespace mgeo {

ToyModel ToyModel::build(const Catalog& raw, const RankerConfig& config, const std::vector<std::string>& banned_phrases,
                         double mask_threshold) {
    ToyModel model;
    model.catalog = prepare_catalog(raw, config.resolution, mask_threshold);
    model.raw_height = raw.products.front().image.height;
    model.raw_width = raw.products.front().image.width;
    model.banned = banned_unigrams(banned_phrases);
    model.vocab = build_vocab(model.catalog, model.banned);
    model.params = RankerParams::initialize(config, model.vocab.size());
    model.lm = fit_bigram_lm(model.catalog, model.vocab);
    model.scene = encode_scene(model.catalog, model.vocab, model.params);
    model.pre_ranking = rank(model.scene, model.params);
    for (const auto& p : model.catalog.products) model.description_tokens.push_back(model.vocab.ids(tokenize(p.description)));
    return model;
}

ToyObjective::ToyObjective(const ToyModel& model, std::size_t target)
    : model_(model), target_(target), spec_(make_target_spec(model.catalog, target, model.pre_ranking.permutation)) {}

LossGrad ToyObjective::loss_and_grads(const TargetState& state, Wrt wrt) const {
    return mgeo::loss_and_grads(model_, spec_, state, wrt);
}

RankingResult ToyObjective::evaluate(const Image& image, const std::vector<int>& hard_suffix) const {
    Scene scene = model_.scene;
    scene.listings[target_] = {encode_listing_text(model_.description_tokens[target_], hard_suffix, model_.params),
                               encode_image(image, model_.params)};
    return rank(scene, model_.params);
}

RankingResult ToyObjective::evaluate_description(const std::string& description, const Image& image) const {
    std::vector<int> tokens;
    std::string dropped;
    for (const auto& t : tokenize(description)) {
        if (auto id = model_.vocab.find(t)) {
            tokens.push_back(*id);
        } else {
            dropped += (dropped.empty() ? "" : ", ") + t;
        }
    }
    if (!dropped.empty()) warn("out-of-vocabulary tokens dropped from replacement text: " + dropped);
    Scene scene = model_.scene;
    scene.listings[target_] = {encode_text(tokens, model_.params), encode_image(image, model_.params)};
    return rank(scene, model_.params);
}

namespace {

// d cos(q, x) / dx scaled by `upstream`, accumulated into `out`.
void cosine_backward(const Vec& q, const Vec& x, double upstream, Vec& out) {
    double dot = 0.0, nq = 0.0, nx = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        dot += q[i] * x[i];
        nq += q[i] * q[i];
        nx += x[i] * x[i];
    }
    if (nq == 0.0 || nx == 0.0) return;
    const double norm_q = std::sqrt(nq), norm_x = std::sqrt(nx);
    const double cos = dot / (norm_q * norm_x);
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] += upstream * (q[i] / (norm_q * norm_x) - cos * x[i] / nx);
    }
}

}  // namespace

LossGrad loss_and_grads(const ToyModel& model, const TargetSpec& target, const TargetState& state, Wrt wrt) {
    const RankerParams& params = model.params;
    const RankerConfig& cfg = params.config;
    const std::size_t t = target.target_index;
    const auto& description = model.description_tokens.at(t);
    const bool want_image = wrt == Wrt::Image || wrt == Wrt::Both;
    const bool want_suffix = wrt == Wrt::Suffix || wrt == Wrt::Both;
    if (want_suffix && state.hard_suffix) throw DomainError("suffix gradient requested for a hard suffix");

    Scene scene = model.scene;
    ListingFeatures& feat = scene.listings[t];
    feat.text = state.hard_suffix ? encode_listing_text(description, *state.hard_suffix, params)
                                  : encode_listing_text(description, state.suffix, params);
    feat.image = encode_image(state.image, params);

    LossGrad out;
    out.scores = score_products(scene, params);
    out.loss = plackett_luce_nll(out.scores, target.desired_permutation, cfg.temperature);
    if (!want_image && !want_suffix) return out;

    const double g_score = plackett_luce_grad(out.scores, target.desired_permutation, cfg.temperature)[t];
    const double ct = cosine(scene.query, feat.text);
    const double cv = cosine(scene.query, feat.image);
    const int d = params.dim();

    if (want_suffix) {
        const SuffixLogits& logits = state.suffix;
        out.grad_suffix = SuffixLogits(logits.length, logits.vocab_size);
        const std::size_t count = description.size() + logits.length;
        if (logits.length > 0) {
            Vec g_text(d, 0.0);
            cosine_backward(scene.query, feat.text, g_score * (cfg.text_weight + cfg.interaction_weight * cv), g_text);
            // h_w = E[w]·g_text / count, shared by every position.
            Vec h(params.vocab_size);
            for (std::size_t w = 0; w < params.vocab_size; ++w) {
                const auto e = params.embedding(w);
                double dot = 0.0;
                for (int k = 0; k < d; ++k) dot += e[k] * g_text[k];
                h[w] = dot / static_cast<double>(count);
            }
            for (int pos = 0; pos < logits.length; ++pos) {
                const Vec p = softmax(logits.row(pos));
                double mean = 0.0;
                for (std::size_t w = 0; w < p.size(); ++w) mean += p[w] * h[w];
                auto row = out.grad_suffix.row(pos);
                for (std::size_t w = 0; w < p.size(); ++w) row[w] = p[w] * (h[w] - mean);
            }
        }
    }

    if (want_image) {
        Vec g_v(d, 0.0);
        cosine_backward(scene.query, feat.image, g_score * (cfg.image_weight + cfg.interaction_weight * ct), g_v);
        const int p = cfg.patch_size;
        const double patches = static_cast<double>((state.image.height / p) * (state.image.width / p));
        Vec g_u(d);
        for (int k = 0; k < d; ++k) g_u[k] = g_v[k] * (1.0 - feat.image[k] * feat.image[k]) / patches;
        // Every patch shares the projection, so the pixel gradient depends only
        // on the pixel's offset inside its patch.
        Vec local(static_cast<std::size_t>(params.patch_features()));
        for (std::size_t f = 0; f < local.size(); ++f) {
            const double* w = params.patch_projection.data() + f * d;
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += w[k] * g_u[k];
            local[f] = dot;
        }
        out.grad_image = Image(state.image.height, state.image.width, 3);
        for (int y = 0; y < state.image.height; ++y) {
            for (int x = 0; x < state.image.width; ++x) {
                const int off = (y % p) * p + (x % p);
                for (int c = 0; c < 3; ++c) out.grad_image.at(y, x, c) = local[off * 3 + c];
            }
        }
    }
    return out;
}

}  // namespace mgeo

namespace mgeo {

AttackSetup make_toy_setup(const ToyModel& model, std::size_t target) {
    if (target >= model.catalog.size()) throw DomainError("target index out of range");
    const ProductListing& listing = model.catalog.products[target];
    AttackSetup setup;
    setup.objective = std::make_shared<ToyObjective>(model, target);
    setup.vocab = &model.vocab;
    setup.lm = &model.lm;
    setup.target = target;
    setup.target_id = listing.id;
    setup.description = listing.description;
    setup.description_tokens = model.description_tokens[target];
    setup.banned = banned_ids(model.vocab, model.banned);
    setup.base_image = listing.image;
    setup.mask = listing.mask ? *listing.mask : estimate_mask(listing.image);
    setup.pre_rank = model.pre_ranking.rank_of(target);
    setup.catalog_size = model.catalog.size();
    return setup;
}

}  // namespace mgeo
