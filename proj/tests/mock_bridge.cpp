#include <cstring>

#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "support.hpp"

namespace mgeo::test {

using nlohmann::json;

MockBridgeServer::MockBridgeServer() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0) {
        throw std::runtime_error("mock bridge: cannot listen");
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
}

MockBridgeServer::~MockBridgeServer() {
    stop_ = true;
    thread_.join();
    ::close(listen_fd_);
}

std::string MockBridgeServer::transcript(const Catalog& catalog, const std::vector<std::size_t>& order) {
    std::string text = "Here is the ranking of the products:\n\n";
    for (std::size_t k = 0; k < order.size(); ++k) {
        text += std::to_string(k + 1) + ". **" + catalog.products.at(order[k]).name + "**\n   - A fine choice.\n";
    }
    return text;
}

json MockBridgeServer::respond(const BridgeRequest& request) {
    BridgeResponse r;
    r.id = request.id;
    switch (request.op) {
        case BridgeOp::Rank:
            r.ranking_text = transcript(request.catalog, request.target_permutation);
            break;
        case BridgeOp::LossGradImage: {
            const Image& img = request.catalog.products.at(request.target_index).image;
            r.grad_shape = expected_grad_shape(request);
            for (double x : img.data) {
                r.loss += 0.5 * (x - 0.5) * (x - 0.5);
                r.grad.push_back(x - 0.5);
            }
            break;
        }
        case BridgeOp::LossGradText:
            r.grad_shape = expected_grad_shape(request);
            for (double z : request.suffix->data) {
                r.loss += 0.5 * z * z;
                r.grad.push_back(z);
            }
            break;
    }
    return to_json(r, request.op);
}

namespace {

bool read_exact(int fd, std::uint8_t* out, std::size_t n, const std::atomic<bool>& stop) {
    std::size_t got = 0;
    while (got < n) {
        pollfd p{fd, POLLIN, 0};
        const int rc = ::poll(&p, 1, 50);
        if (stop) return false;
        if (rc <= 0) continue;
        const ssize_t k = ::recv(fd, out + got, n - got, 0);
        if (k <= 0) return false;
        got += static_cast<std::size_t>(k);
    }
    return true;
}

void write_all(int fd, const std::vector<std::uint8_t>& bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t k = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (k <= 0) return;
        sent += static_cast<std::size_t>(k);
    }
}

}  // namespace

void MockBridgeServer::serve() {
    while (!stop_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        handle(fd);
        ::close(fd);
    }
}

void MockBridgeServer::handle(int fd) {
    while (!stop_) {
        std::uint8_t header[4];
        if (!read_exact(fd, header, 4, stop_)) return;
        const std::uint32_t n = std::uint32_t(header[0]) << 24 | std::uint32_t(header[1]) << 16 |
                                std::uint32_t(header[2]) << 8 | header[3];
        std::vector<std::uint8_t> frame(4 + n);
        std::memcpy(frame.data(), header, 4);
        if (!read_exact(fd, frame.data() + 4, n, stop_)) return;
        ++requests_;

        json reply;
        BridgeRequest request;
        try {
            request = request_from_json(decode_frame(frame));
            reply = respond(request);
        } catch (const std::exception& e) {
            reply = {{"id", 0}, {"ok", false}, {"error", {{"code", "malformed_frame"}, {"message", e.what()}}}};
        }
        switch (fault_.load()) {
            case Fault::None: break;
            case Fault::WrongShape:
                if (reply.contains("grad")) reply["grad"]["shape"] = std::vector<std::size_t>{1, 1, 3};
                break;
            case Fault::WrongId: reply["id"] = request.id + 100; break;
            case Fault::ErrorFrame:
                reply = {{"id", request.id}, {"ok", false}, {"error", {{"code", "out_of_memory"}, {"message", "mock OOM"}}}};
                break;
            case Fault::CloseMidFrame: {
                auto bytes = encode_frame(reply);
                bytes.resize(bytes.size() / 2);
                write_all(fd, bytes);
                return;
            }
            case Fault::Stall:
                while (!stop_) std::this_thread::sleep_for(std::chrono::milliseconds(10));
                return;
            case Fault::Garbage: {
                const std::string junk = "not json at all";
                std::vector<std::uint8_t> bytes = {0, 0, 0, static_cast<std::uint8_t>(junk.size())};
                bytes.insert(bytes.end(), junk.begin(), junk.end());
                write_all(fd, bytes);
                continue;
            }
        }
        write_all(fd, encode_frame(reply));
    }
}

}  // namespace mgeo::test
