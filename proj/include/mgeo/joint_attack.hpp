#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgeo/image_attack.hpp"
#include "mgeo/text_attack.hpp"

namespace mgeo {

enum class AttackKind { Text, Image, Joint, Static };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& text);

struct JointConfig {
    int rounds = 3;
    TextAttackConfig text;
    ImageAttackConfig image;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RoundTrace {
    int round = 0;
    TextTrace text;
    ImageTrace image;
};

struct AttackReport {
    AttackKind kind = AttackKind::Joint;
    std::string target_id;
    std::size_t target_index = 0;
    std::size_t catalog_size = 0;
    int pre_rank = 0;
    int post_rank = 0;        // quantized image, hard-decoded suffix
    int float_post_rank = 0;  // unquantized image, hard-decoded suffix
    /// Set when the unquantized image ranks better than its deployed version.
    bool float_only_gain = false;
    double final_target_loss = 0.0;
    std::string decoded_suffix;
    std::vector<int> suffix_tokens;
    PerturbationStats stats;
    std::vector<RoundTrace> rounds;
    nlohmann::json config;
    std::uint64_t seed = 0;

    Image adversarial_image;  // unquantized; not serialized
    Image deployed_image;     // quantized; not serialized

    int rank_change() const { return post_rank - pre_rank; }
};

/// Instrumentation for the alternation schedule. Rounds are 1-based.
struct JointHooks {
    std::function<void(int round, int step, const Image& image)> text_step;
    std::function<void(int round, int step, const TargetState& suffix)> image_step;
};

/// Alternating coordinate descent: each round runs a text step against the
/// previous round's image, then an image step against the freshly decoded
/// suffix. Suffix logits persist across rounds. A modality with zero steps
/// stays at its original content.
AttackReport run_mgeo(const AttackSetup& setup, const JointConfig& config, const JointHooks& hooks = {});

/// Text-only or image-only attack: the same schedule with the other
/// modality's step count set to zero, so the active modality receives
/// rounds·K total steps.
AttackReport run_unimodal(const AttackSetup& setup, AttackKind kind, const JointConfig& config);

/// Re-ranks with externally produced content swapped in; no optimization.
/// `replacement_image` must match the target image's shape.
AttackReport evaluate_static_edit(const AttackSetup& setup, const std::optional<std::string>& replacement_text,
                                  const std::optional<Image>& replacement_image);

/// Dispatches on kind (Static evaluates the unedited listing).
AttackReport run_attack(const AttackSetup& setup, AttackKind kind, const JointConfig& config);

nlohmann::json to_json(const JointConfig& config);
JointConfig joint_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PerturbationStats& stats);
nlohmann::json to_json(const AttackReport& report);

/// CSV with columns step,L_target,L_fluency,L_ngram,L_text.
std::string text_trace_csv(const TextTrace& trace);
/// CSV with columns step,L_target,L_S,L_M,L_image.
std::string image_trace_csv(const ImageTrace& trace);

}  // namespace mgeo
