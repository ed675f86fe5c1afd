#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "msd/bpe.hpp"
#include "msd/classifier.hpp"
#include "msd/corpus.hpp"
#include "msd/embed_client.hpp"

namespace msd {

enum class EmbeddingProvider { Builtin, Remote };

std::string_view to_string(EmbeddingProvider provider);

struct ContextConfig {
    EmbeddingProvider provider = EmbeddingProvider::Builtin;
    std::size_t vocab_size = 8000;
    std::size_t dim = 64;
    /// Attention looks at most this many tokens to either side.
    std::size_t window = 3;
    /// Longer inputs are truncated to their first max_tokens subwords.
    std::size_t max_tokens = 512;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    double learning_rate = 0.01;
    double weight_decay = 1e-4;
    double init_range = 0.1;
    std::uint64_t seed = 7;
    RemoteConfig remote;

    void validate() const;
};

/// Token embeddings, one local self-attention layer and a logistic head.
///
/// For tokens x_1..x_n (PAD removed):
///   a_ij  = softmax_j( (x_i Wq).(x_j Wk) / sqrt(d) + bias[j - i] ),  |j - i| <= window
///   c_i   = sum_j a_ij x_j Wv
///   h_i   = x_i + x_i * c_i          (elementwise gate)
///   logit = w . mean_i(h_i) + b
///
/// The relative-position bias and the asymmetric query/key maps make the
/// output depend on token order; the gate lets a token's representation
/// depend on which words surround it.
///
/// All parameters live in one flat vector (embedding table row-major, then
/// Wq, Wk, Wv row-major, the bias, the head weights and the head bias).
class ContextNetwork {
public:
    ContextNetwork() = default;
    ContextNetwork(std::size_t vocab_size, std::size_t dim, std::size_t window);

    std::size_t vocab_size() const { return vocab_; }
    std::size_t dim() const { return dim_; }
    std::size_t window() const { return window_; }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    /// Uniform in [-range, range] for embeddings and projections; bias and
    /// head start at zero.
    void initialize(std::uint64_t seed, double range);

    /// Mean-pooled token representation. PAD ids are dropped first.
    Eigen::VectorXd pooled(std::span<const std::int32_t> ids) const;
    double logit(std::span<const std::int32_t> ids) const;

    /// Log-loss of one sequence against `target` (1 = BULLSHIT); adds its
    /// gradient into `grad` (same layout as parameters()).
    double loss_and_gradient(std::span<const std::int32_t> ids, double target, Eigen::Ref<Eigen::VectorXd> grad) const;

    struct Forward;

private:
    void forward(std::span<const std::int32_t> ids, Forward& f) const;

    std::size_t vocab_ = 0, dim_ = 0, window_ = 0;
    Eigen::VectorXd params_;
};

struct ContextTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t epochs = 0;
    std::size_t vocab_size = 0;
    bool reverted_to_initial = false;
};

/// The context classifier: either the built-in encoder, or mean-pooled
/// token vectors from a remote embedding server with a logistic head.
class ContextClassifier {
public:
    EmbeddingProvider provider() const { return provider_; }
    const ContextConfig& config() const { return config_; }

    ClassifierOutput predict(std::string_view text) const;
    /// Same as predict() on each text; remote calls are batched.
    std::vector<ClassifierOutput> predict_many(std::span<const std::string> texts) const;

    const SubwordTokenizer& tokenizer() const { return tokenizer_; }
    const ContextNetwork& network() const { return network_; }
    const RemoteManifest& remote_manifest() const { return remote_manifest_; }

    /// Encoded ids after truncation (built-in provider).
    std::vector<std::int32_t> encode(std::string_view text) const;

    nlohmann::json to_json() const;
    /// `endpoint_override` replaces a remote model's stored endpoint.
    static ContextClassifier from_json(const nlohmann::json& j,
                                       const std::optional<std::string>& endpoint_override = std::nullopt);

private:
    friend ContextClassifier train_context(const LabeledCorpus&, const ContextConfig&, ContextTrainReport*);

    double remote_logit(const TokenEmbeddings& tokens) const;

    EmbeddingProvider provider_ = EmbeddingProvider::Builtin;
    ContextConfig config_;
    SubwordTokenizer tokenizer_;
    ContextNetwork network_;
    RemoteManifest remote_manifest_;
    // Endpoint saved with the model; a load-time override only redirects
    // requests and leaves the serialized form unchanged.
    std::string recorded_endpoint_;
    // Remote head: pooled vectors are standardized with the training mean
    // and standard deviation before the logistic layer.
    Eigen::VectorXd feature_mean_, feature_scale_;
    Eigen::VectorXd head_w_;
    double head_b_ = 0.0;
};

/// Trains by minibatch Adam on mean log-loss (fixed epochs, seeded
/// initialization and shuffling). Requires >= 2 documents per class.
ContextClassifier train_context(const LabeledCorpus& corpus, const ContextConfig& config,
                                ContextTrainReport* report = nullptr);

ClassifierOutput predict_context(const ContextClassifier& model, std::string_view text);

}  // namespace msd
