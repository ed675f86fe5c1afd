#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace msd {

/// Environment variable consulted when no endpoint is given explicitly.
inline constexpr const char* kEmbedUrlEnv = "MSD_EMBED_URL";

struct RemoteConfig {
    std::string endpoint;  ///< e.g. http://127.0.0.1:8765
    std::size_t max_batch = 16;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds max_backoff{5000};
    std::chrono::milliseconds timeout{30000};
    std::size_t max_in_flight = 4;
};

struct RemoteManifest {
    std::size_t dim = 0;
    std::string model_name;
};

/// One row per token.
using TokenEmbeddings = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Client for the token-embedding server protocol:
///   GET  /manifest -> {"dim": d, "model_name": "..."}
///   POST /embed {"texts": [...]} -> {"dim": d, "embeddings": [[[d floats] per token] per text]}
///
/// Connection failures, timeouts, 429 and 5xx responses are retried with
/// exponential backoff up to `max_retries`; other failures are reported
/// immediately. All failures surface as remote errors.
class EmbedClient {
public:
    explicit EmbedClient(RemoteConfig config);

    const RemoteConfig& config() const { return config_; }

    RemoteManifest manifest() const;

    /// A single request. Batches larger than max_batch are rejected before
    /// anything is sent. If `expected_dim` is set, a server answering with a
    /// different dimension is an error.
    std::vector<TokenEmbeddings> embed(std::span<const std::string> texts,
                                       std::optional<std::size_t> expected_dim = std::nullopt) const;

    /// Splits into max_batch chunks with at most max_in_flight requests
    /// outstanding; results keep the input order.
    std::vector<TokenEmbeddings> embed_all(std::span<const std::string> texts,
                                           std::optional<std::size_t> expected_dim = std::nullopt) const;

private:
    struct Url {
        std::string scheme_host_port;
        std::string base_path;
    };

    std::string request(const std::string& method, const std::string& path, const std::string& body) const;

    RemoteConfig config_;
    Url url_;
};

/// Explicit endpoint if given, else $MSD_EMBED_URL, else nullopt.
std::optional<std::string> resolve_endpoint(const std::optional<std::string>& explicit_endpoint);

/// Convenience wrapper over EmbedClient::embed_all.
std::vector<TokenEmbeddings> embed_remote(std::span<const std::string> texts, const RemoteConfig& config);

}  // namespace msd
