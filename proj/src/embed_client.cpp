#include "msd/embed_client.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "msd/error.hpp"

namespace msd {

using nlohmann::json;

namespace {

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

EmbedClient::EmbedClient(RemoteConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw remote_error("embedding endpoint is not configured");
    if (config_.max_batch == 0) throw remote_error("max_batch must be positive");
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw remote_error("endpoint must include a scheme: " + config_.endpoint);
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    url_.scheme_host_port = config_.endpoint.substr(0, path_start);
    if (path_start != std::string::npos) {
        url_.base_path = config_.endpoint.substr(path_start);
        while (!url_.base_path.empty() && url_.base_path.back() == '/') url_.base_path.pop_back();
    }
}

std::string EmbedClient::request(const std::string& method, const std::string& path, const std::string& body) const {
    const std::string full_path = url_.base_path + path;
    auto backoff = config_.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff = std::min(backoff * 2, config_.max_backoff);
        }
        httplib::Client client(url_.scheme_host_port);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        auto res = method == "GET" ? client.Get(full_path) : client.Post(full_path, body, "application/json");
        if (!res) {
            last_error = "request to " + config_.endpoint + full_path + " failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return res->body;
        last_error = config_.endpoint + full_path + " returned HTTP " + std::to_string(res->status);
        if (!retryable_status(res->status)) break;
    }
    throw remote_error(last_error);
}

RemoteManifest EmbedClient::manifest() const {
    const auto body = request("GET", "/manifest", "");
    try {
        const auto j = json::parse(body);
        RemoteManifest m;
        m.dim = j.at("dim").get<std::size_t>();
        m.model_name = j.value("model_name", std::string{});
        if (m.dim == 0) throw remote_error("embedding server declares dim 0");
        return m;
    } catch (const json::exception& e) {
        throw remote_error(std::string("malformed /manifest response: ") + e.what());
    }
}

std::vector<TokenEmbeddings> EmbedClient::embed(std::span<const std::string> texts,
                                                std::optional<std::size_t> expected_dim) const {
    if (texts.size() > config_.max_batch) {
        throw remote_error("embedding batch of " + std::to_string(texts.size()) + " exceeds max_batch " +
                           std::to_string(config_.max_batch));
    }
    if (texts.empty()) return {};
    const json request_body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    const auto body = request("POST", "/embed", request_body.dump());
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw remote_error(std::string("malformed /embed response: ") + e.what());
    }
    std::vector<TokenEmbeddings> out;
    try {
        const auto dim = j.at("dim").get<std::size_t>();
        if (expected_dim && dim != *expected_dim) {
            throw remote_error("embedding dimension mismatch: server returned " + std::to_string(dim) +
                               ", model expects " + std::to_string(*expected_dim));
        }
        const auto& seqs = j.at("embeddings");
        if (!seqs.is_array() || seqs.size() != texts.size()) {
            throw remote_error("/embed returned " + std::to_string(seqs.size()) + " sequences for " +
                               std::to_string(texts.size()) + " texts");
        }
        for (const auto& seq : seqs) {
            TokenEmbeddings m(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(dim));
            Eigen::Index row = 0;
            for (const auto& vec : seq) {
                if (!vec.is_array() || vec.size() != dim) {
                    throw remote_error("embedding dimension mismatch: token vector of length " +
                                       std::to_string(vec.size()) + ", declared dim " + std::to_string(dim));
                }
                for (std::size_t k = 0; k < dim; ++k) m(row, static_cast<Eigen::Index>(k)) = vec[k].get<double>();
                ++row;
            }
            out.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw remote_error(std::string("malformed /embed response: ") + e.what());
    }
    return out;
}

std::vector<TokenEmbeddings> EmbedClient::embed_all(std::span<const std::string> texts,
                                                    std::optional<std::size_t> expected_dim) const {
    const std::size_t n_chunks = (texts.size() + config_.max_batch - 1) / config_.max_batch;
    std::vector<std::vector<TokenEmbeddings>> chunks(n_chunks);
    std::vector<std::exception_ptr> errors(n_chunks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) {
            const std::size_t lo = c * config_.max_batch;
            const std::size_t len = std::min(config_.max_batch, texts.size() - lo);
            try {
                chunks[c] = embed(texts.subspan(lo, len), expected_dim);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t n_workers = std::clamp<std::size_t>(config_.max_in_flight, 1, std::max<std::size_t>(n_chunks, 1));
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<TokenEmbeddings> out;
    out.reserve(texts.size());
    for (auto& chunk : chunks) {
        for (auto& m : chunk) out.push_back(std::move(m));
    }
    return out;
}

std::optional<std::string> resolve_endpoint(const std::optional<std::string>& explicit_endpoint) {
    if (explicit_endpoint && !explicit_endpoint->empty()) return explicit_endpoint;
    if (const char* env = std::getenv(kEmbedUrlEnv); env && *env) return std::string(env);
    return std::nullopt;
}

std::vector<TokenEmbeddings> embed_remote(std::span<const std::string> texts, const RemoteConfig& config) {
    return EmbedClient(config).embed_all(texts);
}

}  // namespace msd
