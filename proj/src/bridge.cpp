#include <algorithm>
#include <bit>
#include <charconv>
#include <cerrno>
#include <cstring>
#include <regex>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "mgeo/bridge.hpp"
#include "mgeo/text_attack.hpp"

namespace mgeo {

using nlohmann::json;

std::string render_prompt(const Catalog& catalog, const std::string& tpl) {
    static const std::string open_tag = "{{#products}}";
    static const std::string close_tag = "{{/products}}";
    const std::string n = std::to_string(catalog.size());

    auto substitute = [&](std::string_view text, const ProductListing* item, std::size_t index, std::string& out) {
        std::size_t pos = 0;
        while (pos < text.size()) {
            const std::size_t open = text.find("{{", pos);
            if (open == std::string::npos) {
                out.append(text.substr(pos));
                break;
            }
            out.append(text.substr(pos, open - pos));
            const std::size_t close = text.find("}}", open);
            if (close == std::string::npos) throw ParseError("unterminated placeholder in prompt template");
            const std::string_view key = text.substr(open + 2, close - open - 2);
            if (key == "query") {
                out += catalog.query;
            } else if (key == "n") {
                out += n;
            } else if (item && key == "index") {
                out += std::to_string(index + 1);
            } else if (item && key == "name") {
                out += item->name;
            } else if (item && key == "description") {
                out += item->description;
            } else {
                throw ParseError("unknown placeholder {{" + std::string(key) + "}} in prompt template");
            }
            pos = close + 2;
        }
    };

    std::string out;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const std::size_t open = tpl.find(open_tag, pos);
        if (open == std::string::npos) {
            substitute(std::string_view(tpl).substr(pos), nullptr, 0, out);
            break;
        }
        substitute(std::string_view(tpl).substr(pos, open - pos), nullptr, 0, out);
        const std::size_t body_start = open + open_tag.size();
        const std::size_t close = tpl.find(close_tag, body_start);
        if (close == std::string::npos) throw ParseError("unterminated {{#products}} section in prompt template");
        const std::string_view body = std::string_view(tpl).substr(body_start, close - body_start);
        for (std::size_t i = 0; i < catalog.size(); ++i) substitute(body, &catalog.products[i], i, out);
        pos = close + close_tag.size();
    }
    return out;
}

namespace {

bool contains_all(const std::vector<std::string>& haystack, const std::vector<std::string>& needles) {
    std::multiset<std::string> pool(haystack.begin(), haystack.end());
    for (const auto& t : needles) {
        auto it = pool.find(t);
        if (it == pool.end()) return false;
        pool.erase(it);
    }
    return true;
}

std::size_t match_product(const std::string& listed, const Catalog& catalog) {
    const auto tokens = tokenize(listed);
    std::vector<std::size_t> exact, superset, subset;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const auto name = tokenize(catalog.products[i].name);
        if (name == tokens) {
            exact.push_back(i);
        } else if (!name.empty() && contains_all(tokens, name)) {
            superset.push_back(i);
        } else if (!tokens.empty() && contains_all(name, tokens)) {
            subset.push_back(i);
        }
    }
    if (exact.size() == 1) return exact.front();
    if (!superset.empty()) {
        // The listed name mentions a catalog name; prefer the most specific.
        std::size_t best = superset.front();
        bool tie = false;
        for (std::size_t i : superset) {
            const auto len = tokenize(catalog.products[i].name).size();
            const auto best_len = tokenize(catalog.products[best].name).size();
            if (len > best_len) {
                best = i;
                tie = false;
            } else if (i != best && len == best_len) {
                tie = true;
            }
        }
        if (!tie) return best;
    } else if (subset.size() == 1) {
        return subset.front();
    }
    throw ParseError("cannot match listed product \"" + listed + "\" to a unique catalog entry");
}

}  // namespace

std::vector<std::size_t> parse_ranking(const std::string& model_output, const Catalog& catalog) {
    static const std::regex item(R"(^\s*(\d+)\.\s+\*\*(.+?)\*\*)");
    std::vector<std::size_t> permutation;
    std::vector<int> listed_at(catalog.size(), 0);
    std::istringstream lines(model_output);
    std::string line;
    while (permutation.size() < catalog.size() && std::getline(lines, line)) {
        std::smatch m;
        if (!std::regex_search(line, m, item)) continue;
        const int number = std::stoi(m[1].str());
        const int expected = static_cast<int>(permutation.size()) + 1;
        if (number != expected) {
            throw ParseError("non-contiguous numbering: expected item " + std::to_string(expected) + ", found " +
                             std::to_string(number));
        }
        const std::size_t idx = match_product(m[2].str(), catalog);
        if (listed_at[idx]) {
            throw ParseError("duplicate assignment: \"" + catalog.products[idx].name + "\" listed at " +
                             std::to_string(listed_at[idx]) + " and " + std::to_string(number));
        }
        listed_at[idx] = number;
        permutation.push_back(idx);
    }
    if (permutation.size() < catalog.size()) {
        std::string missing;
        for (std::size_t i = 0; i < catalog.size(); ++i) {
            if (!listed_at[i]) missing += (missing.empty() ? "" : ", ") + ("\"" + catalog.products[i].name + "\"");
        }
        throw ParseError("missing product: " + missing);
    }
    return permutation;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = bytes[i] << 16 | bytes[i + 1] << 8 | bytes[i + 2];
        out += kB64[v >> 18];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kB64[v >> 18];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16 | bytes[i + 1] << 8;
        out += kB64[v >> 18];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw FrameError("base64 length is not a multiple of 4");
    auto value = [](char ch) -> int {
        if (ch >= 'A' && ch <= 'Z') return ch - 'A';
        if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
        if (ch >= '0' && ch <= '9') return ch - '0' + 52;
        if (ch == '+') return 62;
        if (ch == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char ch = text[i + k];
            if (ch == '=' && i + 4 == text.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else {
                if (pad) throw FrameError("invalid base64 padding");
                v[k] = value(ch);
                if (v[k] < 0) throw FrameError("invalid base64 character");
            }
        }
        const std::uint32_t word = v[0] << 18 | v[1] << 12 | v[2] << 6 | v[3];
        out.push_back(static_cast<std::uint8_t>(word >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(word >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(word));
    }
    return out;
}

std::string encode_f64(std::span<const double> values) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    return base64_encode(bytes);
}

std::vector<double> decode_f64(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 8 != 0) throw FrameError("float64 payload length is not a multiple of 8");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::vector<std::uint8_t> encode_frame(const json& message) {
    const std::string body = message.dump();
    if (body.size() > kMaxFrameBytes) throw FrameError("frame exceeds maximum size");
    std::vector<std::uint8_t> out(4 + body.size());
    const auto n = static_cast<std::uint32_t>(body.size());
    out[0] = static_cast<std::uint8_t>(n >> 24);
    out[1] = static_cast<std::uint8_t>(n >> 16);
    out[2] = static_cast<std::uint8_t>(n >> 8);
    out[3] = static_cast<std::uint8_t>(n);
    std::memcpy(out.data() + 4, body.data(), body.size());
    return out;
}

namespace {
std::uint32_t frame_length(const std::uint8_t* p) {
    return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | std::uint32_t(p[3]);
}

json parse_body(const char* data, std::size_t size) {
    try {
        return json::parse(data, data + size);
    } catch (const json::exception& e) {
        throw FrameError(std::string("malformed frame body: ") + e.what());
    }
}
}  // namespace

json decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FrameError("frame shorter than its length prefix");
    const std::uint32_t n = frame_length(bytes.data());
    if (n > kMaxFrameBytes) throw FrameError("frame length " + std::to_string(n) + " exceeds maximum");
    if (bytes.size() != 4 + static_cast<std::size_t>(n)) {
        throw FrameError("frame length prefix " + std::to_string(n) + " does not match payload of " +
                         std::to_string(bytes.size() - 4) + " bytes");
    }
    return parse_body(reinterpret_cast<const char*>(bytes.data() + 4), n);
}

json tensor_payload(std::span<const double> values, const std::vector<std::size_t>& shape) {
    return {{"shape", shape}, {"data", encode_f64(values)}};
}

std::vector<double> tensor_from_payload(const json& payload, const std::vector<std::size_t>& expected_shape) {
    if (!payload.is_object() || !payload.contains("shape") || !payload.contains("data")) {
        throw FrameError("tensor payload needs \"shape\" and \"data\"");
    }
    std::vector<std::size_t> shape;
    try {
        shape = payload["shape"].get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
        throw FrameError("tensor shape must be an array of non-negative integers");
    }
    auto show = [](const std::vector<std::size_t>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
        return out + "]";
    };
    if (!expected_shape.empty() && shape != expected_shape) {
        throw ShapeMismatchError("tensor shape " + show(shape) + " does not match expected " + show(expected_shape));
    }
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    if (!payload["data"].is_string()) throw FrameError("tensor data must be a base64 string");
    auto values = decode_f64(payload["data"].get<std::string>());
    if (values.size() != count) {
        throw ShapeMismatchError("tensor has " + std::to_string(values.size()) + " elements, shape " + show(shape) +
                                 " needs " + std::to_string(count));
    }
    return values;
}

std::string to_string(BridgeOp op) {
    switch (op) {
        case BridgeOp::Rank: return "rank";
        case BridgeOp::LossGradImage: return "loss_grad_image";
        case BridgeOp::LossGradText: return "loss_grad_text";
    }
    return "unknown";
}

BridgeOp parse_bridge_op(const std::string& text) {
    if (text == "rank") return BridgeOp::Rank;
    if (text == "loss_grad_image") return BridgeOp::LossGradImage;
    if (text == "loss_grad_text") return BridgeOp::LossGradText;
    throw FrameError("unknown op \"" + text + "\"");
}

std::vector<std::size_t> expected_grad_shape(const BridgeRequest& request) {
    switch (request.op) {
        case BridgeOp::Rank: return {};
        case BridgeOp::LossGradImage: {
            const Image& img = request.catalog.products.at(request.target_index).image;
            return {static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width), 3};
        }
        case BridgeOp::LossGradText:
            if (!request.suffix) throw FrameError("loss_grad_text request without suffix logits");
            return {static_cast<std::size_t>(request.suffix->length), static_cast<std::size_t>(request.suffix->vocab_size)};
    }
    return {};
}

json to_json(const BridgeRequest& r) {
    json products = json::array();
    for (const auto& p : r.catalog.products) {
        products.push_back({{"id", p.id},
                            {"name", p.name},
                            {"description", p.description},
                            {"image", tensor_payload(p.image.data, {static_cast<std::size_t>(p.image.height),
                                                                    static_cast<std::size_t>(p.image.width), 3})}});
    }
    json j = {{"id", r.id},
              {"op", to_string(r.op)},
              {"catalog", {{"category", r.catalog.category}, {"query", r.catalog.query}, {"products", products}}},
              {"target_index", r.target_index},
              {"target_permutation", r.target_permutation}};
    if (r.suffix) {
        j["suffix_logits"] = tensor_payload(r.suffix->data, {static_cast<std::size_t>(r.suffix->length),
                                                             static_cast<std::size_t>(r.suffix->vocab_size)});
        j["vocab"] = r.vocab;
    }
    return j;
}

BridgeRequest request_from_json(const json& j) {
    try {
        BridgeRequest r;
        r.id = j.at("id").get<std::uint64_t>();
        r.op = parse_bridge_op(j.at("op").get<std::string>());
        const json& c = j.at("catalog");
        r.catalog.category = c.value("category", std::string());
        r.catalog.query = c.at("query").get<std::string>();
        for (const auto& p : c.at("products")) {
            ProductListing listing;
            listing.id = p.at("id").get<std::string>();
            listing.name = p.at("name").get<std::string>();
            listing.description = p.at("description").get<std::string>();
            const auto shape = p.at("image").at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 3 || shape[2] != 3) throw ShapeMismatchError("image shape must be [H,W,3]");
            listing.image = Image(static_cast<int>(shape[0]), static_cast<int>(shape[1]), 3);
            listing.image.data = tensor_from_payload(p["image"], shape);
            r.catalog.products.push_back(std::move(listing));
        }
        r.target_index = j.at("target_index").get<std::size_t>();
        r.target_permutation = j.at("target_permutation").get<std::vector<std::size_t>>();
        if (j.contains("suffix_logits")) {
            const auto shape = j["suffix_logits"].at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) throw ShapeMismatchError("suffix logits shape must be [L,V]");
            SuffixLogits s(static_cast<int>(shape[0]), static_cast<int>(shape[1]));
            s.data = tensor_from_payload(j["suffix_logits"], shape);
            r.suffix = std::move(s);
            r.vocab = j.value("vocab", std::vector<std::string>{});
        }
        return r;
    } catch (const json::exception& e) {
        throw FrameError(std::string("malformed request: ") + e.what());
    }
}

json to_json(const BridgeResponse& r, BridgeOp op) {
    json j = {{"id", r.id}, {"ok", true}};
    if (op == BridgeOp::Rank) {
        j["ranking_text"] = r.ranking_text;
    } else {
        j["loss"] = r.loss;
        j["grad"] = tensor_payload(r.grad, r.grad_shape);
    }
    return j;
}

BridgeResponse response_from_json(const json& j, const BridgeRequest& request) {
    if (!j.is_object()) throw FrameError("response must be a JSON object");
    if (j.contains("ok") && j["ok"].is_boolean() && !j["ok"].get<bool>()) {
        const json err = j.value("error", json::object());
        throw ServerError(err.value("code", std::string("unknown")), err.value("message", std::string()));
    }
    try {
        BridgeResponse r;
        r.id = j.at("id").get<std::uint64_t>();
        if (r.id != request.id) {
            throw FrameError("response id " + std::to_string(r.id) + " does not echo request id " + std::to_string(request.id));
        }
        if (request.op == BridgeOp::Rank) {
            r.ranking_text = j.at("ranking_text").get<std::string>();
        } else {
            r.loss = j.at("loss").get<double>();
            r.grad_shape = expected_grad_shape(request);
            r.grad = tensor_from_payload(j.at("grad"), r.grad_shape);
        }
        return r;
    } catch (const json::exception& e) {
        throw FrameError(std::string("malformed response: ") + e.what());
    }
}

BridgeAddress parse_bridge_address(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ValidationError("bridge address must be host:port, got \"" + text + "\"");
    }
    BridgeAddress addr;
    addr.host = text.substr(0, colon);
    const char* first = text.data() + colon + 1;
    const char* last = text.data() + text.size();
    int port = 0;
    const auto [end, ec] = std::from_chars(first, last, port);
    if (ec != std::errc() || end != last || port <= 0 || port > 65535) {
        throw ValidationError("bad port in bridge address \"" + text + "\"");
    }
    addr.port = static_cast<std::uint16_t>(port);
    return addr;
}

// ---------------------------------------------------------------------------

BridgeClient::BridgeClient(BridgeAddress address, std::chrono::milliseconds timeout)
    : address_(std::move(address)), timeout_(timeout) {}

BridgeClient::~BridgeClient() { close(); }

void BridgeClient::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void BridgeClient::connect() {
    if (fd_ >= 0) return;
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string port = std::to_string(address_.port);
    if (int rc = ::getaddrinfo(address_.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
        throw TransportError("cannot resolve " + address_.host + ": " + gai_strerror(rc));
    }
    std::string last_error = "no addresses";
    for (addrinfo* ai = found; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc < 0 && errno == EINPROGRESS) {
            pollfd p{fd, POLLOUT, 0};
            rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
            if (rc == 0) {
                ::close(fd);
                freeaddrinfo(found);
                throw TimeoutError("connect to " + address_.host + ":" + port + " timed out");
            }
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
            rc = err == 0 ? 0 : -1;
            errno = err;
        }
        if (rc == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            fd_ = fd;
            break;
        }
        last_error = std::strerror(errno);
        ::close(fd);
    }
    freeaddrinfo(found);
    if (fd_ < 0) throw TransportError("cannot connect to " + address_.host + ":" + port + ": " + last_error);
}

void BridgeClient::send_all(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        pollfd p{fd_, POLLOUT, 0};
        const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
        if (rc == 0) throw TimeoutError("send timed out");
        if (rc < 0) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw TransportError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

void BridgeClient::recv_exact(std::uint8_t* out, std::size_t count) {
    std::size_t got = 0;
    while (got < count) {
        pollfd p{fd_, POLLIN, 0};
        const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
        if (rc == 0) throw TimeoutError("no response within " + std::to_string(timeout_.count()) + " ms");
        if (rc < 0) throw TransportError(std::string("poll failed: ") + std::strerror(errno));
        const ssize_t n = ::recv(fd_, out + got, count - got, 0);
        if (n == 0) throw FrameError("connection closed mid-frame");
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw TransportError(std::string("recv failed: ") + std::strerror(errno));
        }
        got += static_cast<std::size_t>(n);
    }
}

json BridgeClient::call_raw(const json& message) {
    connect();
    try {
        send_all(encode_frame(message));
        std::uint8_t header[4];
        recv_exact(header, 4);
        const std::uint32_t n = frame_length(header);
        if (n > kMaxFrameBytes) throw FrameError("frame length " + std::to_string(n) + " exceeds maximum");
        std::vector<std::uint8_t> body(n);
        recv_exact(body.data(), n);
        return parse_body(reinterpret_cast<const char*>(body.data()), body.size());
    } catch (const BridgeError&) {
        // The stream position is unknown after any failure.
        close();
        throw;
    }
}

BridgeResponse BridgeClient::call(BridgeRequest request) {
    request.id = next_id_++;
    return response_from_json(call_raw(to_json(request)), request);
}

// ---------------------------------------------------------------------------

BridgeObjective::BridgeObjective(std::shared_ptr<BridgeClient> client, const Catalog& catalog, const Vocab& vocab,
                                 std::size_t target, std::vector<std::size_t> desired_permutation)
    : client_(std::move(client)), catalog_(catalog), vocab_(vocab), target_(target), desired_(std::move(desired_permutation)) {}

Catalog BridgeObjective::with_target(const Image& image, const std::string& description) const {
    Catalog c = catalog_;
    c.products[target_].image = image;
    c.products[target_].description = description;
    for (auto& p : c.products) p.mask.reset();
    return c;
}

std::string BridgeObjective::suffixed_description(const std::vector<int>& hard_suffix) const {
    const std::string& base = catalog_.products[target_].description;
    if (hard_suffix.empty()) return base;
    return base + " " + join_tokens(hard_suffix, vocab_);
}

LossGrad BridgeObjective::loss_and_grads(const TargetState& state, Wrt wrt) const {
    LossGrad out;
    const bool want_image = wrt == Wrt::Image || wrt == Wrt::Both;
    const bool want_suffix = wrt == Wrt::Suffix || wrt == Wrt::Both;
    if (want_suffix && state.hard_suffix) throw DomainError("suffix gradient requested for a hard suffix");

    const bool soft = !state.hard_suffix && state.suffix.length > 0;
    const std::string description = suffixed_description(state.hard_suffix ? *state.hard_suffix : std::vector<int>{});
    BridgeRequest request;
    request.catalog = with_target(state.image, description);
    request.target_index = target_;
    request.target_permutation = desired_;

    if (want_image || !soft) {
        request.op = BridgeOp::LossGradImage;
        if (soft) {
            request.suffix = state.suffix;
            request.vocab = vocab_.tokens();
        }
        BridgeResponse r = client_->call(request);
        out.loss = r.loss;
        if (want_image) {
            out.grad_image = Image(state.image.height, state.image.width, 3);
            out.grad_image.data = std::move(r.grad);
        }
    }
    if (want_suffix || (soft && !want_image)) {
        request.op = BridgeOp::LossGradText;
        request.suffix = state.suffix;
        request.vocab = vocab_.tokens();
        BridgeResponse r = client_->call(request);
        if (!want_image) out.loss = r.loss;
        if (want_suffix) {
            out.grad_suffix = SuffixLogits(state.suffix.length, state.suffix.vocab_size);
            out.grad_suffix.data = std::move(r.grad);
        }
    }
    return out;
}

RankingResult BridgeObjective::remote_rank(const Catalog& catalog) const {
    RankingResult result;
    result.permutation = remote_ranking(*client_, catalog);
    // Only the order is observable remotely; scores encode it.
    result.scores.assign(catalog.size(), 0.0);
    for (std::size_t k = 0; k < result.permutation.size(); ++k) {
        result.scores[result.permutation[k]] = static_cast<double>(result.permutation.size() - k);
    }
    return result;
}

RankingResult BridgeObjective::evaluate(const Image& image, const std::vector<int>& hard_suffix) const {
    return remote_rank(with_target(image, suffixed_description(hard_suffix)));
}

RankingResult BridgeObjective::evaluate_description(const std::string& description, const Image& image) const {
    return remote_rank(with_target(image, description));
}

std::vector<std::size_t> remote_ranking(BridgeClient& client, const Catalog& catalog) {
    BridgeRequest request;
    request.op = BridgeOp::Rank;
    request.catalog = catalog;
    for (auto& p : request.catalog.products) p.mask.reset();
    request.target_permutation.resize(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) request.target_permutation[i] = i;
    const BridgeResponse response = client.call(request);
    return parse_ranking(response.ranking_text, catalog);
}

BridgeModel BridgeModel::build(std::shared_ptr<BridgeClient> client, const Catalog& raw,
                               const std::vector<std::string>& banned_phrases, double mask_threshold) {
    BridgeModel model;
    model.client = std::move(client);
    model.catalog = raw;
    for (auto& p : model.catalog.products) {
        if (!p.mask) p.mask = estimate_mask(p.image, mask_threshold);
    }
    model.banned = banned_unigrams(banned_phrases);
    model.vocab = build_vocab(model.catalog, model.banned);
    model.lm = fit_bigram_lm(model.catalog, model.vocab);
    model.pre_ranking = remote_ranking(*model.client, model.catalog);
    return model;
}

AttackSetup make_bridge_setup(const BridgeModel& model, std::size_t target) {
    if (target >= model.catalog.size()) throw DomainError("target index out of range");
    const TargetSpec spec = make_target_spec(model.catalog, target, model.pre_ranking);
    const ProductListing& listing = model.catalog.products[target];
    AttackSetup setup;
    setup.objective =
        std::make_shared<BridgeObjective>(model.client, model.catalog, model.vocab, target, spec.desired_permutation);
    setup.vocab = &model.vocab;
    setup.lm = &model.lm;
    setup.target = target;
    setup.target_id = listing.id;
    setup.description = listing.description;
    setup.description_tokens = model.vocab.ids(tokenize(listing.description));
    setup.banned = banned_ids(model.vocab, model.banned);
    setup.base_image = listing.image;
    setup.mask = *listing.mask;
    for (std::size_t k = 0; k < model.pre_ranking.size(); ++k) {
        if (model.pre_ranking[k] == target) setup.pre_rank = static_cast<int>(k) + 1;
    }
    setup.catalog_size = model.catalog.size();
    return setup;
}

}  // namespace mgeo
