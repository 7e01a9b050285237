#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgeo/error.hpp"
#include "mgeo/objective.hpp"

namespace mgeo {

// ---------------------------------------------------------------------------
// Prompt rendering and transcript parsing

/// The bundled chat template (assets/prompt_template_v1.txt).
const std::string& default_prompt_template();
inline constexpr const char* kPromptTemplateVersion = "v1";

/// Expands `{{#products}}...{{/products}}` once per listing with {{index}},
/// {{name}}, {{description}}, and substitutes {{query}} and {{n}} elsewhere.
/// Substituted text is never re-scanned.
std::string render_prompt(const Catalog& catalog, const std::string& prompt_template = default_prompt_template());

/// Reads a numbered "k. **name**" list out of free-form model output and
/// maps names to catalog indices by normalized-token containment. Returns the
/// 0-based permutation, best first. Throws ParseError on missing products,
/// duplicate assignments, unknown names, or non-contiguous numbering.
std::vector<std::size_t> parse_ranking(const std::string& model_output, const Catalog& catalog);

// ---------------------------------------------------------------------------
// Wire format

class BridgeError : public Error {
public:
    using Error::Error;
};
class TransportError : public BridgeError {
public:
    using BridgeError::BridgeError;
};
class TimeoutError : public BridgeError {
public:
    using BridgeError::BridgeError;
};
class FrameError : public BridgeError {
public:
    using BridgeError::BridgeError;
};
class ShapeMismatchError : public BridgeError {
public:
    using BridgeError::BridgeError;
};
class ServerError : public BridgeError {
public:
    ServerError(std::string code, const std::string& message)
        : BridgeError("server error [" + code + "]: " + message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

inline constexpr std::size_t kMaxFrameBytes = 256u << 20;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Little-endian float64 array as base64.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& text);

/// 4-byte big-endian length followed by UTF-8 JSON.
std::vector<std::uint8_t> encode_frame(const nlohmann::json& message);
/// Decodes exactly one complete frame; throws FrameError otherwise.
nlohmann::json decode_frame(std::span<const std::uint8_t> bytes);

/// {"shape": [...], "data": base64 f64}
nlohmann::json tensor_payload(std::span<const double> values, const std::vector<std::size_t>& shape);
std::vector<double> tensor_from_payload(const nlohmann::json& payload, const std::vector<std::size_t>& expected_shape);

enum class BridgeOp { Rank, LossGradImage, LossGradText };
std::string to_string(BridgeOp op);
BridgeOp parse_bridge_op(const std::string& text);

struct BridgeRequest {
    std::uint64_t id = 0;
    BridgeOp op = BridgeOp::Rank;
    Catalog catalog;  // target listing already carries the candidate content
    std::size_t target_index = 0;
    std::vector<std::size_t> target_permutation;  // 0-based, R*
    std::optional<SuffixLogits> suffix;           // loss_grad_text
    std::vector<std::string> vocab;               // loss_grad_text: row labels of the suffix logits

    bool operator==(const BridgeRequest&) const = default;
};

struct BridgeResponse {
    std::uint64_t id = 0;
    double loss = 0.0;
    std::vector<std::size_t> grad_shape;
    std::vector<double> grad;
    std::string ranking_text;

    bool operator==(const BridgeResponse&) const = default;
};

nlohmann::json to_json(const BridgeRequest& request);
BridgeRequest request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BridgeResponse& response, BridgeOp op);
/// Validates against the request it answers: id echo and gradient shape.
/// Error frames become ServerError.
BridgeResponse response_from_json(const nlohmann::json& j, const BridgeRequest& request);

/// Expected gradient shape for a request ([H,W,3] or [L,V]; empty for rank).
std::vector<std::size_t> expected_grad_shape(const BridgeRequest& request);

// ---------------------------------------------------------------------------
// Client

struct BridgeAddress {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
};
/// "host:port"
BridgeAddress parse_bridge_address(const std::string& text);

/// One connection, one outstanding request. Not thread-safe.
class BridgeClient {
public:
    explicit BridgeClient(BridgeAddress address, std::chrono::milliseconds timeout = std::chrono::seconds(120));
    ~BridgeClient();
    BridgeClient(const BridgeClient&) = delete;
    BridgeClient& operator=(const BridgeClient&) = delete;

    BridgeResponse call(BridgeRequest request);
    nlohmann::json call_raw(const nlohmann::json& message);

    const BridgeAddress& address() const { return address_; }

private:
    void connect();
    void close();
    void send_all(std::span<const std::uint8_t> bytes);
    void recv_exact(std::uint8_t* out, std::size_t count);

    BridgeAddress address_;
    std::chrono::milliseconds timeout_;
    int fd_ = -1;
    std::uint64_t next_id_ = 1;
};

/// Ranking objective served by a remote model. Losses and gradients come from
/// loss_grad_* calls; evaluation renders a rank request and parses the reply.
class BridgeObjective final : public RankingObjective {
public:
    BridgeObjective(std::shared_ptr<BridgeClient> client, const Catalog& catalog, const Vocab& vocab,
                    std::size_t target, std::vector<std::size_t> desired_permutation);

    LossGrad loss_and_grads(const TargetState& state, Wrt wrt) const override;
    RankingResult evaluate(const Image& image, const std::vector<int>& hard_suffix) const override;
    RankingResult evaluate_description(const std::string& description, const Image& image) const override;
    std::size_t vocab_size() const override { return vocab_.size(); }

private:
    Catalog with_target(const Image& image, const std::string& description) const;
    std::string suffixed_description(const std::vector<int>& hard_suffix) const;
    RankingResult remote_rank(const Catalog& catalog) const;

    std::shared_ptr<BridgeClient> client_;
    const Catalog& catalog_;
    const Vocab& vocab_;
    std::size_t target_;
    std::vector<std::size_t> desired_;
};

/// Asks the server for the pre-attack ranking of `catalog`.
std::vector<std::size_t> remote_ranking(BridgeClient& client, const Catalog& catalog);

}  // namespace mgeo

namespace mgeo {

/// Local state for attacking through a bridge: vocabulary and fluency model
/// are fitted client-side; the catalog stays at its native resolution.
struct BridgeModel {
    Catalog catalog;
    Vocab vocab;
    BigramLM lm;
    std::vector<std::string> banned;
    std::vector<std::size_t> pre_ranking;
    std::shared_ptr<BridgeClient> client;

    static BridgeModel build(std::shared_ptr<BridgeClient> client, const Catalog& raw,
                             const std::vector<std::string>& banned_phrases,
                             double mask_threshold = kDefaultBackgroundThreshold);
};

AttackSetup make_bridge_setup(const BridgeModel& model, std::size_t target);

}  // namespace mgeo
