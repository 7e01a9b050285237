#include <fstream>
#include <random>
#include <sstream>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "mgeo/bridge.hpp"
#include "mgeo/joint_attack.hpp"
#include "support.hpp"

using namespace mgeo;
using nlohmann::json;
using Fault = test::MockBridgeServer::Fault;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

const Catalog& mop() {
    static const Catalog c = load_catalog(test::fixture("mop"));
    return c;
}

std::size_t homettler() { return *mop().find("mop-02"); }

std::uint16_t closed_port() {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

BridgeRequest image_request(const Catalog& c, std::size_t target) {
    BridgeRequest r;
    r.op = BridgeOp::LossGradImage;
    r.catalog = c;
    for (auto& p : r.catalog.products) p.mask.reset();
    r.target_index = target;
    for (std::size_t i = 0; i < c.size(); ++i) r.target_permutation.push_back(i);
    return r;
}

}  // namespace

// ---------------------------------------------------------------- prompt

TEST_CASE("render_prompt reproduces the reference prompt for the mop catalog") {
    const std::string rendered = render_prompt(mop());
    const std::string expected = read_file(test::fixture_dir() / "mop" / "reference_prompt.txt");
    CHECK(rendered == expected);
    CHECK(rendered.find("Name: KeFanta Commercial Mop") != std::string::npos);
    CHECK(rendered.rfind("<|im_start|>system\n", 0) == 0);
    CHECK(rendered.ends_with("<|im_start|>assistant\n"));
    CHECK(rendered.find("Rank these 10 products from most recommended (1) to least recommended (10)") != std::string::npos);
}

TEST_CASE("render_prompt: one vision placeholder per product") {
    for (int n : {2, 5, 7}) {
        const Catalog c = test::random_catalog(static_cast<std::uint64_t>(n), n, 4);
        const std::string p = render_prompt(c);
        std::size_t count = 0;
        for (std::size_t pos = 0; (pos = p.find("<|vision_start|>", pos)) != std::string::npos; ++pos) ++count;
        CHECK(count == static_cast<std::size_t>(n));
        CHECK(p.find("Rank these " + std::to_string(n) + " products") != std::string::npos);
    }
}

TEST_CASE("render_prompt is injective on names and descriptions") {
    const std::string base = render_prompt(mop());
    Catalog a = mop();
    a.products[3].name += "x";
    CHECK(render_prompt(a) != base);
    Catalog b = mop();
    b.products[7].description += ".";
    CHECK(render_prompt(b) != base);
}

TEST_CASE("render_prompt does not re-scan substituted text") {
    Catalog c = test::random_catalog(1, 2, 4);
    c.products[0].name = "{{query}}";
    const std::string p = render_prompt(c, "{{#products}}{{name}};{{/products}}{{query}}");
    CHECK(p == "{{query}};" + c.products[1].name + ";" + c.query);
}

TEST_CASE("render_prompt template errors") {
    const Catalog c = test::random_catalog(1, 2, 4);
    CHECK_THROWS_AS(render_prompt(c, "{{nope}}"), ParseError);
    CHECK_THROWS_AS(render_prompt(c, "{{query"), ParseError);
    CHECK_THROWS_AS(render_prompt(c, "{{#products}}{{name}}"), ParseError);
}

// ---------------------------------------------------------------- parse

TEST_CASE("parse_ranking on the reference transcripts") {
    const auto pre = parse_ranking(read_file(test::fixture_dir() / "mop" / "transcript_pre.txt"), mop());
    const auto post = parse_ranking(read_file(test::fixture_dir() / "mop" / "transcript_post.txt"), mop());
    auto rank_of = [](const std::vector<std::size_t>& perm, std::size_t i) {
        return static_cast<int>(std::find(perm.begin(), perm.end(), i) - perm.begin()) + 1;
    };
    CHECK(pre.size() == 10);
    CHECK(post.size() == 10);
    CHECK(rank_of(pre, homettler()) == 9);
    CHECK(rank_of(post, homettler()) == 4);
    CHECK(rank_of(post, homettler()) - rank_of(pre, homettler()) == -5);
}

TEST_CASE("parse_ranking round-trips rendered transcripts") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> order(mop().size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        CHECK(parse_ranking(test::MockBridgeServer::transcript(mop(), order), mop()) == order);
    }
}

TEST_CASE("parse_ranking errors name the defect") {
    std::vector<std::size_t> order(mop().size());
    std::iota(order.begin(), order.end(), 0);

    auto nine = order;
    nine.pop_back();
    CHECK_THROWS_WITH_AS(parse_ranking(test::MockBridgeServer::transcript(mop(), nine), mop()),
                         doctest::Contains("missing product"), ParseError);

    auto dup = order;
    dup[4] = dup[3];
    CHECK_THROWS_WITH_AS(parse_ranking(test::MockBridgeServer::transcript(mop(), dup), mop()),
                         doctest::Contains("duplicate assignment"), ParseError);

    std::string skipped = test::MockBridgeServer::transcript(mop(), order);
    const auto pos = skipped.find("3. **");
    skipped.replace(pos, 1, "4");
    CHECK_THROWS_WITH_AS(parse_ranking(skipped, mop()), doctest::Contains("non-contiguous numbering"), ParseError);

    CHECK_THROWS_WITH_AS(parse_ranking("1. **Nothing Like It**\n", mop()), doctest::Contains("cannot match"), ParseError);
}

// ---------------------------------------------------------------- codecs

TEST_CASE("base64") {
    auto enc = [](const std::string& s) {
        return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foobar") == "Zm9vYmFy");
    const auto bytes = base64_decode("Zm9vYmFy");
    CHECK(std::string(bytes.begin(), bytes.end()) == "foobar");
    CHECK_THROWS_AS(base64_decode("abc"), FrameError);
    CHECK_THROWS_AS(base64_decode("ab!d"), FrameError);
    CHECK_THROWS_AS(base64_decode("a=bc"), FrameError);
}

TEST_CASE("float64 payloads are little-endian and exact") {
    const std::vector<double> v = {1.0};
    const auto bytes = base64_decode(encode_f64(v));
    CHECK(bytes == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0xf0, 0x3f});
    std::mt19937_64 rng(3);
    std::vector<double> r(257);
    for (auto& x : r) x = std::ldexp(static_cast<double>(rng() >> 11), -40) - 1e3;
    r.push_back(-0.0);
    r.push_back(std::numeric_limits<double>::denorm_min());
    CHECK(decode_f64(encode_f64(r)) == r);
    CHECK_THROWS_AS(decode_f64("Zm9v"), FrameError);
}

TEST_CASE("frames") {
    const json msg = {{"id", 7}, {"op", "rank"}};
    const auto frame = encode_frame(msg);
    const std::string body = msg.dump();
    REQUIRE(frame.size() == body.size() + 4);
    CHECK(frame[0] == 0);
    CHECK(frame[3] == body.size());
    CHECK(decode_frame(frame) == msg);

    auto truncated = frame;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_frame(truncated), FrameError);
    CHECK_THROWS_AS(decode_frame(std::vector<std::uint8_t>{0, 0}), FrameError);
    std::vector<std::uint8_t> junk = {0, 0, 0, 3, 'a', 'b', 'c'};
    CHECK_THROWS_AS(decode_frame(junk), FrameError);
}

TEST_CASE("tensor payloads validate shape") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6};
    const json p = tensor_payload(v, {2, 3});
    CHECK(tensor_from_payload(p, {2, 3}) == v);
    CHECK_THROWS_AS(tensor_from_payload(p, {3, 2}), ShapeMismatchError);
    json short_data = p;
    short_data["data"] = encode_f64(std::vector<double>{1, 2});
    CHECK_THROWS_AS(tensor_from_payload(short_data, {2, 3}), ShapeMismatchError);
    CHECK_THROWS_AS(tensor_from_payload(json{{"shape", {2, 3}}}, {2, 3}), FrameError);
}

TEST_CASE("bridge ops and addresses") {
    for (BridgeOp op : {BridgeOp::Rank, BridgeOp::LossGradImage, BridgeOp::LossGradText}) {
        CHECK(parse_bridge_op(to_string(op)) == op);
    }
    CHECK_THROWS_AS(parse_bridge_op("generate"), FrameError);
    const BridgeAddress a = parse_bridge_address("localhost:7788");
    CHECK(a.host == "localhost");
    CHECK(a.port == 7788);
    CHECK_THROWS_AS(parse_bridge_address("localhost"), ValidationError);
    CHECK_THROWS_AS(parse_bridge_address("h:0"), ValidationError);
    CHECK_THROWS_AS(parse_bridge_address("h:70000"), ValidationError);
    CHECK_THROWS_AS(parse_bridge_address("h:12ab"), ValidationError);
}

TEST_CASE("request and response JSON round trips") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Catalog c = test::random_catalog(rng(), 3 + static_cast<int>(rng() % 4), 4);
        BridgeRequest r = image_request(c, rng() % c.size());
        r.id = rng() >> 1;
        if (trial % 2) {
            r.op = BridgeOp::LossGradText;
            SuffixLogits s(2, 5);
            for (auto& z : s.data) z = std::ldexp(static_cast<double>(rng() >> 11), -50) - 4.0;
            r.suffix = s;
            r.vocab = {"a", "b", "c", "d", "e"};
        }
        CHECK(request_from_json(decode_frame(encode_frame(to_json(r)))) == r);

        BridgeResponse resp;
        resp.id = r.id;
        resp.loss = 0.25 * trial;
        resp.grad_shape = expected_grad_shape(r);
        std::size_t count = 1;
        for (auto d : resp.grad_shape) count *= d;
        for (std::size_t i = 0; i < count; ++i) resp.grad.push_back(std::sin(static_cast<double>(i + trial)));
        CHECK(response_from_json(decode_frame(encode_frame(to_json(resp, r.op))), r) == resp);
    }
}

TEST_CASE("response validation") {
    const BridgeRequest r = [] {
        BridgeRequest x = image_request(test::random_catalog(2, 3, 4), 1);
        x.id = 5;
        return x;
    }();
    CHECK_THROWS_AS(response_from_json(json::array(), r), FrameError);
    CHECK_THROWS_AS(response_from_json({{"id", 6}, {"ok", true}, {"loss", 0.0}, {"grad", tensor_payload({}, {4, 4, 3})}}, r),
                    FrameError);
    CHECK_THROWS_AS(response_from_json({{"id", 5}, {"ok", true}, {"loss", 0.0},
                                        {"grad", tensor_payload(std::vector<double>(47, 0.0), {4, 4, 3})}},
                                       r),
                    ShapeMismatchError);
    try {
        response_from_json({{"id", 5}, {"ok", false}, {"error", {{"code", "model_load"}, {"message", "no weights"}}}}, r);
        FAIL("expected ServerError");
    } catch (const ServerError& e) {
        CHECK(e.code() == "model_load");
        CHECK(std::string(e.what()).find("no weights") != std::string::npos);
    }
}

// ---------------------------------------------------------------- client

TEST_CASE("client against the mock server: closed forms") {
    test::MockBridgeServer server;
    BridgeClient client(server.address(), std::chrono::seconds(5));
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const Catalog c = test::random_catalog(rng(), 4, 4);
        BridgeRequest r = image_request(c, trial % 4);
        if (trial % 3 == 0) {
            const BridgeResponse resp = client.call(r);
            double loss = 0.0;
            const Image& img = c.products[trial % 4].image;
            REQUIRE(resp.grad.size() == img.size());
            for (std::size_t i = 0; i < img.size(); ++i) {
                loss += 0.5 * (img.data[i] - 0.5) * (img.data[i] - 0.5);
                CHECK(resp.grad[i] == img.data[i] - 0.5);
            }
            CHECK(resp.loss == doctest::Approx(loss).epsilon(1e-15));
        } else if (trial % 3 == 1) {
            r.op = BridgeOp::LossGradText;
            SuffixLogits s(3, 6);
            for (auto& z : s.data) z = std::ldexp(static_cast<double>(rng() >> 11), -52) - 1.0;
            r.suffix = s;
            r.vocab = {"a", "b", "c", "d", "e", "f"};
            const BridgeResponse resp = client.call(r);
            CHECK(resp.grad == s.data);
            double loss = 0.0;
            for (double z : s.data) loss += 0.5 * z * z;
            CHECK(resp.loss == doctest::Approx(loss).epsilon(1e-15));
        } else {
            std::vector<std::size_t> order(c.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            r.op = BridgeOp::Rank;
            r.target_permutation = order;
            CHECK(parse_ranking(client.call(r).ranking_text, c) == order);
        }
    }
    CHECK(server.requests() == 100);
}

TEST_CASE("client faults become typed errors") {
    test::MockBridgeServer server;
    BridgeClient client(server.address(), std::chrono::milliseconds(300));
    const BridgeRequest r = image_request(test::random_catalog(4, 3, 4), 0);

    server.set_fault(Fault::WrongShape);
    CHECK_THROWS_AS(client.call(r), ShapeMismatchError);
    server.set_fault(Fault::WrongId);
    CHECK_THROWS_WITH_AS(client.call(r), doctest::Contains("does not echo"), FrameError);
    server.set_fault(Fault::ErrorFrame);
    CHECK_THROWS_WITH_AS(client.call(r), doctest::Contains("out_of_memory"), ServerError);
    server.set_fault(Fault::CloseMidFrame);
    CHECK_THROWS_WITH_AS(client.call(r), doctest::Contains("mid-frame"), FrameError);
    server.set_fault(Fault::Garbage);
    CHECK_THROWS_WITH_AS(client.call(r), doctest::Contains("malformed"), FrameError);

    // The client recovers on a fresh connection once the server behaves.
    server.set_fault(Fault::None);
    CHECK(client.call(r).grad.size() == 4 * 4 * 3);
}

TEST_CASE("client times out on a stalled server") {
    test::MockBridgeServer server;
    server.set_fault(Fault::Stall);
    BridgeClient client(server.address(), std::chrono::milliseconds(150));
    CHECK_THROWS_AS(client.call(image_request(test::random_catalog(4, 3, 4), 0)), TimeoutError);
}

TEST_CASE("client reports a refused connection") {
    BridgeClient client({"127.0.0.1", closed_port()}, std::chrono::milliseconds(500));
    CHECK_THROWS_AS(client.call(image_request(test::random_catalog(4, 3, 4), 0)), TransportError);
}

// ---------------------------------------------------------------- objective

TEST_CASE("bridge objective over the mock server") {
    test::MockBridgeServer server;
    auto client = std::make_shared<BridgeClient>(server.address(), std::chrono::seconds(5));
    const Catalog c = test::random_catalog(8, 4, 8);
    const BridgeModel model = BridgeModel::build(client, c, {"w1", "w2"});
    CHECK(model.pre_ranking == std::vector<std::size_t>{0, 1, 2, 3});
    const AttackSetup s = make_bridge_setup(model, 2);
    CHECK(s.pre_rank == 3);
    CHECK_THROWS_AS(make_bridge_setup(model, 4), DomainError);

    const Image& img = s.base_image;
    SuffixLogits z(2, static_cast<int>(model.vocab.size()), 0.0);
    z.data[1] = 2.0;

    const LossGrad gi = s.objective->loss_and_grads(TargetState{img, {}, std::vector<int>{}}, Wrt::Image);
    double expected = 0.0;
    for (double x : img.data) expected += 0.5 * (x - 0.5) * (x - 0.5);
    CHECK(gi.loss == doctest::Approx(expected).epsilon(1e-15));
    REQUIRE(gi.grad_image.same_shape(img));
    CHECK(gi.grad_image.data[0] == img.data[0] - 0.5);

    const LossGrad gt = s.objective->loss_and_grads(TargetState{img, z, std::nullopt}, Wrt::Suffix);
    CHECK(gt.loss == 2.0);
    CHECK(gt.grad_suffix.data == z.data);

    const LossGrad both = s.objective->loss_and_grads(TargetState{img, z, std::nullopt}, Wrt::Both);
    CHECK(both.loss == doctest::Approx(expected).epsilon(1e-15));
    CHECK(both.grad_suffix.data == z.data);

    CHECK_THROWS_AS(s.objective->loss_and_grads(TargetState{img, z, std::vector<int>{0}}, Wrt::Suffix), DomainError);

    const RankingResult ranked = s.objective->evaluate(img, {0, 1});
    CHECK(ranked.permutation == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(ranked.rank_of(2) == 3);
}

TEST_CASE("joint attack runs end to end through the bridge") {
    test::MockBridgeServer server;
    auto client = std::make_shared<BridgeClient>(server.address(), std::chrono::seconds(5));
    const BridgeModel model = BridgeModel::build(client, test::random_catalog(9, 4, 8), {"w3"});
    const AttackSetup s = make_bridge_setup(model, 1);
    JointConfig cfg;
    cfg.rounds = 2;
    cfg.text.steps = 3;
    cfg.image.steps = 5;
    cfg.image.step_size = 0.05;
    cfg.image.lambda_smooth = 0.0;
    cfg.image.lambda_magnitude = 0.0;
    const AttackReport r = run_mgeo(s, cfg);
    CHECK(r.pre_rank == 2);
    CHECK(r.post_rank == 2);  // the mock echoes catalog order
    CHECK(r.suffix_tokens.size() == 12);
    // PGD on the quadratic mock pulls pixels toward 0.5.
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < s.base_image.size(); ++i) {
        before += std::abs(s.base_image.data[i] - 0.5);
        after += std::abs(r.adversarial_image.data[i] - 0.5);
    }
    CHECK(after < before);
    CHECK(server.requests() > 20);
}
