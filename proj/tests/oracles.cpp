#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mgeo/image_attack.hpp"
#include "mgeo/objective.hpp"
#include "mgeo/text_attack.hpp"
#include "support.hpp"

namespace mgeo::test {

double GradientCheck::worst() const {
    return std::max({target_image, target_suffix, smoothness, magnitude, fluency, ngram});
}

namespace {

template <class F>
double check_vector(std::vector<double>& x, const std::vector<double>& analytic, F&& loss) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        const double numeric = central_difference(
            [&](double v) {
                x[i] = v;
                return loss();
            },
            saved);
        x[i] = saved;
        worst = std::max(worst, rel_error(analytic[i], numeric));
    }
    return worst;
}

}  // namespace

GradientCheck check_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const Catalog raw = random_catalog(seed, 5, 16);
    RankerConfig rc;
    rc.seed = seed;
    rc.resolution = 16;
    rc.patch_size = 4;
    rc.embed_dim = 8;
    const ToyModel model = ToyModel::build(raw, rc, {"top", "must rank", "best"});
    const std::size_t target = seed % raw.size();
    const TargetSpec spec = make_target_spec(model.catalog, target, model.pre_ranking.permutation);
    const int V = static_cast<int>(model.vocab.size());

    GradientCheck out;
    out.vocab_size = model.vocab.size();

    TargetState state;
    state.image = model.catalog.products[target].image;
    for (auto& v : state.image.data) v = std::clamp(v + 0.1 * normal(rng), 0.0, 1.0);
    state.suffix = SuffixLogits(4, V);
    for (auto& z : state.suffix.data) z = normal(rng);

    const LossGrad lg = loss_and_grads(model, spec, state, Wrt::Both);
    auto target_loss = [&] { return loss_and_grads(model, spec, state, Wrt::None).loss; };
    out.target_image = check_vector(state.image.data, lg.grad_image.data, target_loss);
    out.target_suffix = check_vector(state.suffix.data, lg.grad_suffix.data, target_loss);

    Image delta(16, 16, 3);
    for (auto& v : delta.data) v = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.01 + 0.1 * unit(rng));
    Mask mask(16, 16, 1);
    for (auto& v : mask.data) v = unit(rng) < 0.4 ? 1.0 : 0.0;
    const Image gs = smoothness_grad(delta);
    out.smoothness = check_vector(delta.data, gs.data, [&] { return smoothness_loss(delta); });
    const Image gm = magnitude_grad(delta, mask, 3.0, 1.0);
    out.magnitude = check_vector(delta.data, gm.data, [&] { return magnitude_loss(delta, mask, 3.0, 1.0); });

    const std::vector<int>& context = model.description_tokens[target];
    const std::vector<int> banned = banned_ids(model.vocab, model.banned);
    const SuffixLogits gf = fluency_grad(state.suffix, context, model.lm);
    out.fluency = check_vector(state.suffix.data, gf.data, [&] { return fluency_nll(state.suffix, context, model.lm); });
    const SuffixLogits gn = ngram_grad(state.suffix, banned);
    out.ngram = check_vector(state.suffix.data, gn.data, [&] { return ngram_penalty(state.suffix, banned); });
    return out;
}

double plackett_luce_mass(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (auto& s : scores) s = normal(rng);
    std::vector<std::size_t> perm(scores.size());
    std::iota(perm.begin(), perm.end(), 0);
    double mass = 0.0;
    do {
        mass += std::exp(-plackett_luce_nll(scores, perm, 0.25));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return mass;
}

}  // namespace mgeo::test
