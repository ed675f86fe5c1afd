#include "msd/context.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "msd/error.hpp"
#include "msd/rng.hpp"

namespace msd {

using nlohmann::json;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string_view to_string(EmbeddingProvider provider) {
    return provider == EmbeddingProvider::Builtin ? "builtin" : "remote";
}

void ContextConfig::validate() const {
    if (provider == EmbeddingProvider::Builtin) {
        if (vocab_size < SubwordTokenizer::kReservedSymbols) {
            throw data_error("context: vocab_size must be at least " + std::to_string(SubwordTokenizer::kReservedSymbols));
        }
        if (dim == 0) throw data_error("context: dim must be positive");
        if (max_tokens == 0) throw data_error("context: max_tokens must be positive");
    } else if (remote.endpoint.empty()) {
        throw remote_error("context: remote provider requires an embedding endpoint");
    }
    if (batch_size == 0) throw data_error("context: batch_size must be positive");
    if (!(learning_rate > 0.0)) throw data_error("context: learning_rate must be positive");
    if (!(weight_decay >= 0.0)) throw data_error("context: weight_decay must be non-negative");
    if (!(init_range > 0.0)) throw data_error("context: init_range must be positive");
}

namespace {

struct Layout {
    std::size_t vocab, dim, window;
    std::size_t embed() const { return 0; }
    std::size_t wq() const { return vocab * dim; }
    std::size_t wk() const { return wq() + dim * dim; }
    std::size_t wv() const { return wk() + dim * dim; }
    std::size_t bias() const { return wv() + dim * dim; }
    std::size_t head() const { return bias() + 2 * window + 1; }
    std::size_t head_bias() const { return head() + dim; }
    std::size_t total() const { return head_bias() + 1; }
};

template <typename Vec>
auto matrix_view(Vec& v, std::size_t offset, std::size_t rows, std::size_t cols) {
    using Scalar = std::remove_reference_t<decltype(*v.data())>;
    using Mapped = std::conditional_t<std::is_const_v<Scalar>, const RowMat, RowMat>;
    return Eigen::Map<Mapped>(v.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

double log_loss_from_logit(double z, double target) {
    // -[t log s(z) + (1 - t) log(1 - s(z))]
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - target * z;
}

class Adam {
public:
    explicit Adam(Eigen::Index n, double lr) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(lr) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++t_;
        m_ = beta1 * m_ + (1.0 - beta1) * grad;
        v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

private:
    Eigen::VectorXd m_, v_;
    double lr_;
    long t_ = 0;
};

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

// Scratch matrices only grow, so repeated passes over documents of
// varying length do not hit the allocator.
struct ContextNetwork::Forward {
    std::vector<std::int32_t> tokens;
    RowMat x, q, k, v, attn, c, h, dx, dc, dq, dk, dv;
    Eigen::VectorXd pooled;
    double logit = 0.0;
};

namespace {

void reserve_rows(RowMat& m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() < rows || m.cols() != cols) m.resize(std::max(rows, m.rows()), cols);
}

ContextNetwork::Forward& scratch() {
    thread_local ContextNetwork::Forward f;
    return f;
}

}  // namespace

ContextNetwork::ContextNetwork(std::size_t vocab_size, std::size_t dim, std::size_t window)
    : vocab_(vocab_size), dim_(dim), window_(window) {
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(Layout{vocab_, dim_, window_}.total()));
}

void ContextNetwork::initialize(std::uint64_t seed, double range) {
    const Layout layout{vocab_, dim_, window_};
    Rng rng(seed);
    params_.setZero();
    for (std::size_t i = 0; i < layout.bias(); ++i) params_[static_cast<Eigen::Index>(i)] = rng.uniform(-range, range);
}

void ContextNetwork::forward(std::span<const std::int32_t> ids, Forward& f) const {
    const Layout layout{vocab_, dim_, window_};
    f.tokens.clear();
    for (auto id : ids) {
        if (id == SubwordTokenizer::kPad) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_) {
            throw data_error("context: token id " + std::to_string(id) + " outside vocabulary");
        }
        f.tokens.push_back(id);
    }
    if (f.tokens.empty()) throw data_error("context: empty token stream");

    const auto n = static_cast<Eigen::Index>(f.tokens.size());
    const auto d = static_cast<Eigen::Index>(dim_);
    const auto w = static_cast<Eigen::Index>(window_);
    const auto embed = matrix_view(params_, layout.embed(), vocab_, dim_);
    const auto wq = matrix_view(params_, layout.wq(), dim_, dim_);
    const auto wk = matrix_view(params_, layout.wk(), dim_, dim_);
    const auto wv = matrix_view(params_, layout.wv(), dim_, dim_);
    const double* bias = params_.data() + layout.bias();

    for (RowMat* m : {&f.x, &f.q, &f.k, &f.v, &f.c, &f.h}) reserve_rows(*m, n, d);
    reserve_rows(f.attn, n, 2 * w + 1);
    auto x = f.x.topRows(n);
    auto q = f.q.topRows(n);
    auto k = f.k.topRows(n);
    auto v = f.v.topRows(n);
    auto c = f.c.topRows(n);
    auto attn = f.attn.topRows(n);

    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = embed.row(f.tokens[static_cast<std::size_t>(i)]);
    q.noalias() = x * wq;
    k.noalias() = x * wk;
    v.noalias() = x * wv;

    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    attn.setZero();
    c.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - w), hi = std::min<Eigen::Index>(n - 1, i + w);
        double max_s = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double s = scale * q.row(i).dot(k.row(j)) + bias[j - i + w];
            attn(i, j - i + w) = s;
            max_s = std::max(max_s, s);
        }
        double z = 0.0;
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double e = std::exp(attn(i, j - i + w) - max_s);
            attn(i, j - i + w) = e;
            z += e;
        }
        for (Eigen::Index j = lo; j <= hi; ++j) {
            attn(i, j - i + w) /= z;
            c.row(i) += attn(i, j - i + w) * v.row(j);
        }
    }
    auto h = f.h.topRows(n);
    h = x + x.cwiseProduct(c);
    f.pooled = h.colwise().mean().transpose();
    const Eigen::Map<const Eigen::VectorXd> head(params_.data() + layout.head(), d);
    f.logit = head.dot(f.pooled) + params_[static_cast<Eigen::Index>(layout.head_bias())];
}

Eigen::VectorXd ContextNetwork::pooled(std::span<const std::int32_t> ids) const {
    auto& f = scratch();
    forward(ids, f);
    return f.pooled;
}

double ContextNetwork::logit(std::span<const std::int32_t> ids) const {
    auto& f = scratch();
    forward(ids, f);
    return f.logit;
}

double ContextNetwork::loss_and_gradient(std::span<const std::int32_t> ids, double target,
                                         Eigen::Ref<Eigen::VectorXd> grad) const {
    const Layout layout{vocab_, dim_, window_};
    if (static_cast<std::size_t>(grad.size()) != layout.total()) throw data_error("context: gradient size mismatch");
    auto& f = scratch();
    forward(ids, f);
    const auto n = static_cast<Eigen::Index>(f.tokens.size());
    const auto d = static_cast<Eigen::Index>(dim_);
    const auto w = static_cast<Eigen::Index>(window_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    const auto x = f.x.topRows(n);
    const auto q = f.q.topRows(n);
    const auto k = f.k.topRows(n);
    const auto v = f.v.topRows(n);
    const auto c = f.c.topRows(n);
    const auto attn = f.attn.topRows(n);

    const double loss = log_loss_from_logit(f.logit, target);
    const double dz = sigmoid(f.logit) - target;

    const Eigen::Map<const Eigen::VectorXd> head(params_.data() + layout.head(), d);
    Eigen::Map<Eigen::VectorXd> g_head(grad.data() + layout.head(), d);
    g_head += dz * f.pooled;
    grad[static_cast<Eigen::Index>(layout.head_bias())] += dz;

    for (RowMat* m : {&f.dx, &f.dc, &f.dq, &f.dk, &f.dv}) reserve_rows(*m, n, d);
    auto dx = f.dx.topRows(n);
    auto dc = f.dc.topRows(n);
    auto dq = f.dq.topRows(n);
    auto dk = f.dk.topRows(n);
    auto dv = f.dv.topRows(n);

    // Every h_i receives the same upstream gradient through the mean.
    const Eigen::RowVectorXd dh = (dz / static_cast<double>(n)) * head.transpose();
    dx = (c.array() + 1.0).rowwise() * dh.array();
    dc = x.array().rowwise() * dh.array();
    dq.setZero();
    dk.setZero();
    dv.setZero();

    double* g_bias = grad.data() + layout.bias();
    std::array<double, 64> da_small{};
    std::vector<double> da_large;
    double* da = da_small.data();
    if (2 * w + 1 > static_cast<Eigen::Index>(da_small.size())) {
        da_large.resize(static_cast<std::size_t>(2 * w + 1));
        da = da_large.data();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - w), hi = std::min<Eigen::Index>(n - 1, i + w);
        double weighted = 0.0;
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double a = attn(i, j - i + w);
            const double g = dc.row(i).dot(v.row(j));
            da[j - i + w] = g;
            weighted += a * g;
            dv.row(j) += a * dc.row(i);
        }
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double ds = attn(i, j - i + w) * (da[j - i + w] - weighted);
            g_bias[j - i + w] += ds;
            dq.row(i) += (scale * ds) * k.row(j);
            dk.row(j) += (scale * ds) * q.row(i);
        }
    }

    const auto wq = matrix_view(params_, layout.wq(), dim_, dim_);
    const auto wk = matrix_view(params_, layout.wk(), dim_, dim_);
    const auto wv = matrix_view(params_, layout.wv(), dim_, dim_);
    auto g_wq = matrix_view(grad, layout.wq(), dim_, dim_);
    auto g_wk = matrix_view(grad, layout.wk(), dim_, dim_);
    auto g_wv = matrix_view(grad, layout.wv(), dim_, dim_);
    g_wq.noalias() += x.transpose() * dq;
    g_wk.noalias() += x.transpose() * dk;
    g_wv.noalias() += x.transpose() * dv;
    dx.noalias() += dq * wq.transpose();
    dx.noalias() += dk * wk.transpose();
    dx.noalias() += dv * wv.transpose();

    auto g_embed = matrix_view(grad, layout.embed(), vocab_, dim_);
    for (Eigen::Index i = 0; i < n; ++i) g_embed.row(f.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    return loss;
}

std::vector<std::int32_t> ContextClassifier::encode(std::string_view text) const {
    auto ids = tokenizer_.encode(text);
    if (ids.size() > config_.max_tokens) ids.resize(config_.max_tokens);
    return ids;
}

double ContextClassifier::remote_logit(const TokenEmbeddings& tokens) const {
    if (tokens.rows() == 0) throw data_error("context: empty token stream from embedding server");
    const Eigen::VectorXd pooled = tokens.colwise().mean().transpose();
    return head_w_.dot((pooled - feature_mean_).cwiseQuotient(feature_scale_)) + head_b_;
}

ClassifierOutput ContextClassifier::predict(std::string_view text) const {
    if (provider_ == EmbeddingProvider::Builtin) {
        return ClassifierOutput::from_log_odds(network_.logit(encode(text)));
    }
    const std::string owned(text);
    const auto emb = EmbedClient(config_.remote).embed(std::span<const std::string>(&owned, 1), remote_manifest_.dim);
    return ClassifierOutput::from_log_odds(remote_logit(emb.at(0)));
}

std::vector<ClassifierOutput> ContextClassifier::predict_many(std::span<const std::string> texts) const {
    std::vector<ClassifierOutput> out;
    out.reserve(texts.size());
    if (provider_ == EmbeddingProvider::Builtin) {
        for (const auto& t : texts) out.push_back(predict(t));
        return out;
    }
    for (const auto& emb : EmbedClient(config_.remote).embed_all(texts, remote_manifest_.dim)) {
        out.push_back(ClassifierOutput::from_log_odds(remote_logit(emb)));
    }
    return out;
}

ClassifierOutput predict_context(const ContextClassifier& model, std::string_view text) { return model.predict(text); }

namespace {

// Shared minibatch loop. `loss_grad(i, grad)` returns the loss of example i
// and accumulates its gradient.
template <typename LossGrad>
void run_adam(Eigen::VectorXd& params, std::size_t n_examples, const ContextConfig& cfg, Rng& rng, LossGrad&& loss_grad) {
    Adam adam(params.size(), cfg.learning_rate);
    Eigen::VectorXd grad(params.size());
    auto order = iota_indices(n_examples);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < n_examples; start += cfg.batch_size) {
            const std::size_t end = std::min(n_examples, start + cfg.batch_size);
            grad.setZero();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) batch_loss += loss_grad(order[k], grad);
            grad /= static_cast<double>(end - start);
            grad += cfg.weight_decay * params;
            if (!std::isfinite(batch_loss) || !grad.allFinite()) {
                throw data_error("context: non-finite loss or gradient at epoch " + std::to_string(epoch) +
                                 ", batch starting at example " + std::to_string(start) +
                                 " (batch loss " + std::to_string(batch_loss) + ")");
            }
            adam.step(params, grad);
        }
    }
}

}  // namespace

ContextClassifier train_context(const LabeledCorpus& corpus, const ContextConfig& config, ContextTrainReport* report) {
    config.validate();
    corpus.require_trainable(2);
    std::vector<std::string> texts;
    std::vector<double> targets;
    for (const auto& doc : corpus) {
        texts.push_back(doc.text);
        targets.push_back(*doc.label == Label::Bullshit ? 1.0 : 0.0);
    }
    const std::size_t n = texts.size();

    ContextClassifier model;
    model.provider_ = config.provider;
    model.config_ = config;
    Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    ContextTrainReport local;

    if (config.provider == EmbeddingProvider::Remote) {
        const EmbedClient client(config.remote);
        model.remote_manifest_ = client.manifest();
        model.recorded_endpoint_ = config.remote.endpoint;
        const auto dim = static_cast<Eigen::Index>(model.remote_manifest_.dim);
        const auto embeddings = client.embed_all(texts, model.remote_manifest_.dim);
        RowMat features(static_cast<Eigen::Index>(n), dim);
        for (std::size_t i = 0; i < n; ++i) {
            if (embeddings[i].rows() == 0) throw data_error("context: document '" + corpus[i].id + "' has no tokens");
            features.row(static_cast<Eigen::Index>(i)) = embeddings[i].colwise().mean();
        }
        // Standardize each coordinate; constant ones keep scale 1.
        model.feature_mean_ = features.colwise().mean().transpose();
        model.feature_scale_ = ((features.rowwise() - model.feature_mean_.transpose()).colwise().squaredNorm() /
                                static_cast<double>(n))
                                   .cwiseSqrt()
                                   .transpose();
        for (auto& s : model.feature_scale_) {
            if (!(s > 1e-12)) s = 1.0;
        }
        features = (features.rowwise() - model.feature_mean_.transpose()).array().rowwise() /
                   model.feature_scale_.transpose().array();
        Eigen::VectorXd params = Eigen::VectorXd::Zero(dim + 1);
        auto loss_of = [&](const Eigen::VectorXd& p, std::size_t i) {
            return log_loss_from_logit(features.row(static_cast<Eigen::Index>(i)).dot(p.head(dim)) + p[dim], targets[i]);
        };
        auto mean_loss = [&](const Eigen::VectorXd& p) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += loss_of(p, i);
            return total / static_cast<double>(n);
        };
        local.initial_loss = mean_loss(params);
        run_adam(params, n, config, rng, [&](std::size_t i, Eigen::VectorXd& grad) {
            const auto row = features.row(static_cast<Eigen::Index>(i));
            const double z = row.dot(params.head(dim)) + params[dim];
            const double dz = sigmoid(z) - targets[i];
            grad.head(dim) += dz * row.transpose();
            grad[dim] += dz;
            return log_loss_from_logit(z, targets[i]);
        });
        local.final_loss = mean_loss(params);
        if (local.final_loss > local.initial_loss) {
            params.setZero();
            local.final_loss = local.initial_loss;
            local.reverted_to_initial = true;
        }
        model.head_w_ = params.head(dim);
        model.head_b_ = params[dim];
    } else {
        model.tokenizer_ = SubwordTokenizer::train(texts, config.vocab_size);
        std::vector<std::vector<std::int32_t>> encoded;
        encoded.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            encoded.push_back(model.encode(texts[i]));
            if (encoded.back().empty()) throw data_error("context: document '" + corpus[i].id + "' has no tokens");
        }
        model.network_ = ContextNetwork(model.tokenizer_.vocab_size(), config.dim, config.window);
        model.network_.initialize(config.seed, config.init_range);
        const Eigen::VectorXd initial = model.network_.parameters();
        auto mean_loss = [&] {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                total += log_loss_from_logit(model.network_.logit(encoded[i]), targets[i]);
            }
            return total / static_cast<double>(n);
        };
        local.initial_loss = mean_loss();
        run_adam(model.network_.parameters(), n, config, rng, [&](std::size_t i, Eigen::VectorXd& grad) {
            return model.network_.loss_and_gradient(encoded[i], targets[i], grad);
        });
        local.final_loss = mean_loss();
        if (local.final_loss > local.initial_loss) {
            model.network_.parameters() = initial;
            local.final_loss = local.initial_loss;
            local.reverted_to_initial = true;
        }
        local.vocab_size = model.tokenizer_.vocab_size();
    }
    local.epochs = config.epochs;
    if (report) *report = local;
    return model;
}

namespace {

json config_to_json(const ContextConfig& c) {
    return {{"vocab_size", c.vocab_size},   {"dim", c.dim},
            {"window", c.window},           {"max_tokens", c.max_tokens},
            {"epochs", c.epochs},           {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
            {"init_range", c.init_range},   {"seed", c.seed},
            {"optimizer", "adam"},          {"pooling", "mean"}};
}

ContextConfig config_from_json(const json& j) {
    ContextConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.init_range = j.at("init_range").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

json ContextClassifier::to_json() const {
    json j = {{"provider", to_string(provider_)}, {"config", config_to_json(config_)}};
    if (provider_ == EmbeddingProvider::Builtin) {
        j["architecture"] = "embedding+local-self-attention(gated)+mean-pool+logistic";
        j["tokenizer"] = tokenizer_.to_json();
        j["parameters"] = std::vector<double>(network_.parameters().begin(), network_.parameters().end());
    } else {
        j["endpoint"] = recorded_endpoint_;
        j["model_name"] = remote_manifest_.model_name;
        j["dim"] = remote_manifest_.dim;
        j["head"] = {{"weights", std::vector<double>(head_w_.begin(), head_w_.end())},
                     {"bias", head_b_},
                     {"feature_mean", std::vector<double>(feature_mean_.begin(), feature_mean_.end())},
                     {"feature_scale", std::vector<double>(feature_scale_.begin(), feature_scale_.end())}};
    }
    return j;
}

ContextClassifier ContextClassifier::from_json(const json& j, const std::optional<std::string>& endpoint_override) {
    ContextClassifier model;
    try {
        const auto provider = j.at("provider").get<std::string>();
        model.config_ = config_from_json(j.at("config"));
        if (provider == "builtin") {
            model.provider_ = EmbeddingProvider::Builtin;
            model.tokenizer_ = SubwordTokenizer::from_json(j.at("tokenizer"));
            model.network_ = ContextNetwork(model.tokenizer_.vocab_size(), model.config_.dim, model.config_.window);
            const auto params = j.at("parameters").get<std::vector<double>>();
            if (params.size() != static_cast<std::size_t>(model.network_.parameters().size())) {
                throw data_error("context: parameter count does not match architecture");
            }
            model.network_.parameters() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
        } else if (provider == "remote") {
            model.provider_ = EmbeddingProvider::Remote;
            model.config_.provider = EmbeddingProvider::Remote;
            model.recorded_endpoint_ = j.at("endpoint").get<std::string>();
            model.config_.remote.endpoint = endpoint_override.value_or(model.recorded_endpoint_);
            model.remote_manifest_.model_name = j.at("model_name").get<std::string>();
            model.remote_manifest_.dim = j.at("dim").get<std::size_t>();
            const auto& head = j.at("head");
            auto vec = [&](const char* key) {
                const auto v = head.at(key).get<std::vector<double>>();
                if (v.size() != model.remote_manifest_.dim) {
                    throw data_error(std::string("context: head ") + key + " size does not match dim");
                }
                return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            };
            model.head_w_ = vec("weights");
            model.feature_mean_ = vec("feature_mean");
            model.feature_scale_ = vec("feature_scale");
            if (!(model.feature_scale_.array() > 0.0).all()) throw data_error("context: head feature_scale must be positive");
            model.head_b_ = head.at("bias").get<double>();
        } else {
            throw data_error("context: unknown provider '" + provider + "'");
        }
    } catch (const json::exception& e) {
        throw data_error(std::string("context: malformed model: ") + e.what());
    }
    return model;
}

}  // namespace msd
