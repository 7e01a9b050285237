#include <cmath>
#include <sstream>

#include "mgeo/error.hpp"
#include "mgeo/joint_attack.hpp"

namespace mgeo {

using nlohmann::json;

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Text: return "text";
        case AttackKind::Image: return "image";
        case AttackKind::Joint: return "joint";
        case AttackKind::Static: return "static";
    }
    return "unknown";
}

AttackKind parse_attack_kind(const std::string& text) {
    if (text == "text") return AttackKind::Text;
    if (text == "image") return AttackKind::Image;
    if (text == "joint") return AttackKind::Joint;
    if (text == "static") return AttackKind::Static;
    throw ValidationError("unknown attack kind \"" + text + "\" (expected text|image|joint|static)");
}

void JointConfig::validate() const {
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    text.validate();
    image.validate();
}

namespace {

void finish_report(const AttackSetup& setup, AttackReport& report, const Image& image, const std::vector<int>& suffix) {
    report.target_id = setup.target_id;
    report.target_index = setup.target;
    report.catalog_size = setup.catalog_size;
    report.pre_rank = setup.pre_rank;
    report.adversarial_image = image;
    report.deployed_image = quantize(image);
    report.suffix_tokens = suffix;
    report.decoded_suffix = join_tokens(suffix, *setup.vocab);
    const RankingResult deployed = setup.objective->evaluate(report.deployed_image, suffix);
    const RankingResult floating = setup.objective->evaluate(image, suffix);
    report.post_rank = deployed.rank_of(setup.target);
    report.float_post_rank = floating.rank_of(setup.target);
    report.float_only_gain = report.float_post_rank < report.post_rank;
    TargetState final_state{report.deployed_image, {}, suffix};
    report.final_target_loss = setup.objective->loss_and_grads(final_state, Wrt::None).loss;
}

}  // namespace

AttackReport run_mgeo(const AttackSetup& setup, const JointConfig& config, const JointHooks& hooks) {
    config.validate();
    const bool text_active = config.text.steps > 0 && config.text.suffix_length > 0;
    const bool image_active = config.image.steps > 0;

    AttackReport report;
    report.kind = AttackKind::Joint;
    report.config = to_json(config);
    report.seed = config.seed;

    Image image = setup.base_image;
    SuffixLogits logits = text_active ? init_suffix(setup.description_tokens, setup.objective->vocab_size(), config.text)
                                      : SuffixLogits(0, static_cast<int>(setup.objective->vocab_size()));
    std::vector<int> suffix;

    for (int round = 1; round <= config.rounds; ++round) {
        RoundTrace trace;
        trace.round = round;
        try {
            if (text_active) {
                TextStepHook text_hook;
                if (hooks.text_step) text_hook = [&](int step, const Image& img) { hooks.text_step(round, step, img); };
                auto text = optimize_suffix(setup, image, logits, config.text, text_hook);
                logits = std::move(text.logits);
                trace.text = std::move(text.trace);
                suffix = decode_tokens(logits);
            }
            if (image_active) {
                TargetState frozen{{}, {}, suffix};
                ImageStepHook image_hook;
                if (hooks.image_step) {
                    image_hook = [&](int step, const TargetState& s) { hooks.image_step(round, step, s); };
                }
                auto result = attack_image(setup, image, frozen, config.image, image_hook);
                image = std::move(result.image);
                trace.image = std::move(result.trace);
            }
        } catch (const AbortError& e) {
            throw AbortError("round " + std::to_string(round) + ": " + e.what());
        }
        report.rounds.push_back(std::move(trace));
    }

    report.stats = perturbation_stats(perturbation(image, setup.base_image), setup.mask, config.image);
    finish_report(setup, report, image, suffix);
    return report;
}

AttackReport run_unimodal(const AttackSetup& setup, AttackKind kind, const JointConfig& config) {
    JointConfig frozen = config;
    if (kind == AttackKind::Text) {
        frozen.image.steps = 0;
    } else if (kind == AttackKind::Image) {
        frozen.text.steps = 0;
    } else {
        throw ValidationError("run_unimodal expects kind text or image");
    }
    AttackReport report = run_mgeo(setup, frozen, {});
    report.kind = kind;
    report.config = to_json(config);
    return report;
}

AttackReport evaluate_static_edit(const AttackSetup& setup, const std::optional<std::string>& replacement_text,
                                  const std::optional<Image>& replacement_image) {
    if (!replacement_text && !replacement_image) throw ValidationError("static edit needs a replacement text or image");
    if (replacement_image && !replacement_image->same_shape(setup.base_image)) {
        throw ValidationError("replacement image is " + std::to_string(replacement_image->height) + "x" +
                              std::to_string(replacement_image->width) + ", target image is " +
                              std::to_string(setup.base_image.height) + "x" + std::to_string(setup.base_image.width));
    }
    AttackReport report;
    report.kind = AttackKind::Static;
    report.target_id = setup.target_id;
    report.target_index = setup.target;
    report.catalog_size = setup.catalog_size;
    report.pre_rank = setup.pre_rank;
    const Image image = replacement_image ? *replacement_image : setup.base_image;
    const std::string description = replacement_text ? *replacement_text : setup.description;
    report.adversarial_image = image;
    report.deployed_image = quantize(image);
    report.decoded_suffix = "";
    report.config = {{"replacement_text", replacement_text ? json(*replacement_text) : json(nullptr)},
                     {"replacement_image", replacement_image.has_value()}};

    const RankingResult deployed = setup.objective->evaluate_description(description, report.deployed_image);
    const RankingResult floating =
        image == report.deployed_image ? deployed : setup.objective->evaluate_description(description, image);
    report.post_rank = deployed.rank_of(setup.target);
    report.float_post_rank = floating.rank_of(setup.target);
    report.float_only_gain = report.float_post_rank < report.post_rank;
    report.stats = perturbation_stats(perturbation(image, setup.base_image), setup.mask, ImageAttackConfig{});
    return report;
}

AttackReport run_attack(const AttackSetup& setup, AttackKind kind, const JointConfig& config) {
    switch (kind) {
        case AttackKind::Joint: return run_mgeo(setup, config);
        case AttackKind::Text:
        case AttackKind::Image: return run_unimodal(setup, kind, config);
        case AttackKind::Static: return evaluate_static_edit(setup, setup.description, std::nullopt);
    }
    throw ValidationError("unknown attack kind");
}

json to_json(const JointConfig& c) {
    return {
        {"rounds", c.rounds},
        {"seed", c.seed},
        {"text",
         {{"suffix_length", c.text.suffix_length},
          {"steps", c.text.steps},
          {"learning_rate", c.text.learning_rate},
          {"lambda_fluency", c.text.lambda_fluency},
          {"lambda_ngram", c.text.lambda_ngram},
          {"banned", c.text.banned},
          {"init", c.text.init == SuffixInit::Uniform ? "uniform" : "description-prefix"},
          {"seed", c.text.seed}}},
        {"image",
         {{"steps", c.image.steps},
          {"step_size", c.image.step_size},
          {"lambda_smooth", c.image.lambda_smooth},
          {"lambda_magnitude", c.image.lambda_magnitude},
          {"foreground_weight", c.image.foreground_weight},
          {"background_weight", c.image.background_weight},
          {"seed", c.image.seed}}},
    };
}

JointConfig joint_config_from_json(const json& j) {
    JointConfig c;
    c.rounds = j.value("rounds", c.rounds);
    c.seed = j.value("seed", c.seed);
    if (j.contains("text")) {
        const json& t = j["text"];
        c.text.suffix_length = t.value("suffix_length", c.text.suffix_length);
        c.text.steps = t.value("steps", c.text.steps);
        c.text.learning_rate = t.value("learning_rate", c.text.learning_rate);
        c.text.lambda_fluency = t.value("lambda_fluency", c.text.lambda_fluency);
        c.text.lambda_ngram = t.value("lambda_ngram", c.text.lambda_ngram);
        c.text.banned = t.value("banned", c.text.banned);
        c.text.init = t.value("init", std::string("uniform")) == "uniform" ? SuffixInit::Uniform
                                                                          : SuffixInit::DescriptionPrefix;
        c.text.seed = t.value("seed", c.text.seed);
    }
    if (j.contains("image")) {
        const json& i = j["image"];
        c.image.steps = i.value("steps", c.image.steps);
        c.image.step_size = i.value("step_size", c.image.step_size);
        c.image.lambda_smooth = i.value("lambda_smooth", c.image.lambda_smooth);
        c.image.lambda_magnitude = i.value("lambda_magnitude", c.image.lambda_magnitude);
        c.image.foreground_weight = i.value("foreground_weight", c.image.foreground_weight);
        c.image.background_weight = i.value("background_weight", c.image.background_weight);
        c.image.seed = i.value("seed", c.image.seed);
    }
    return c;
}

json to_json(const PerturbationStats& s) {
    return {{"linf", s.linf}, {"weighted_l1", s.weighted_l1}, {"total_variation", s.total_variation}};
}

json to_json(const AttackReport& r) {
    json rounds = json::array();
    for (const auto& round : r.rounds) {
        json text = json::array(), image = json::array();
        for (const auto& row : round.text) {
            text.push_back({row.step, row.loss.target, row.loss.fluency, row.loss.ngram, row.loss.total});
        }
        for (const auto& row : round.image) {
            image.push_back({row.step, row.loss.target, row.loss.smoothness, row.loss.magnitude, row.loss.total});
        }
        rounds.push_back({{"round", round.round}, {"text", text}, {"image", image}});
    }
    return {
        {"kind", to_string(r.kind)},
        {"target_id", r.target_id},
        {"target_index", r.target_index},
        {"catalog_size", r.catalog_size},
        {"pre_rank", r.pre_rank},
        {"post_rank", r.post_rank},
        {"rank_change", r.rank_change()},
        {"float_post_rank", r.float_post_rank},
        {"float_only_gain", r.float_only_gain},
        {"final_target_loss", r.final_target_loss},
        {"decoded_suffix", r.decoded_suffix},
        {"suffix_tokens", r.suffix_tokens},
        {"perturbation", to_json(r.stats)},
        {"trace_columns", {{"text", {"step", "L_target", "L_fluency", "L_ngram", "L_text"}},
                           {"image", {"step", "L_target", "L_S", "L_M", "L_image"}}}},
        {"rounds", rounds},
        {"config", r.config},
        {"seed", r.seed},
    };
}

namespace {
std::string fmt(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}
}  // namespace

std::string text_trace_csv(const TextTrace& trace) {
    std::string out = "step,L_target,L_fluency,L_ngram,L_text\n";
    for (const auto& r : trace) {
        out += std::to_string(r.step) + ',' + fmt(r.loss.target) + ',' + fmt(r.loss.fluency) + ',' + fmt(r.loss.ngram) +
               ',' + fmt(r.loss.total) + '\n';
    }
    return out;
}

std::string image_trace_csv(const ImageTrace& trace) {
    std::string out = "step,L_target,L_S,L_M,L_image\n";
    for (const auto& r : trace) {
        out += std::to_string(r.step) + ',' + fmt(r.loss.target) + ',' + fmt(r.loss.smoothness) + ',' +
               fmt(r.loss.magnitude) + ',' + fmt(r.loss.total) + '\n';
    }
    return out;
}

}  // namespace mgeo
