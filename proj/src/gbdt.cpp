#include "msd/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msd/error.hpp"
#include "msd/rng.hpp"

namespace msd {

using nlohmann::json;

void GbdtParams::validate() const {
    if (n_trees < 0) throw data_error("gbdt: n_trees must be non-negative");
    if (max_depth < 0) throw data_error("gbdt: max_depth must be non-negative");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw data_error("gbdt: learning_rate must lie in (0, 1]");
    if (!(l2_reg >= 0.0)) throw data_error("gbdt: l2_reg must be non-negative");
    if (!(min_leaf_weight >= 0.0)) throw data_error("gbdt: min_leaf_weight must be non-negative");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw data_error("gbdt: subsample must lie in (0, 1]");
}

double RegressionTree::predict(const FeatureVector& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& node = nodes[i];
        const auto f = static_cast<std::uint32_t>(node.feature);
        auto it = std::lower_bound(x.entries.begin(), x.entries.end(), f,
                                   [](const auto& e, std::uint32_t k) { return e.first < k; });
        bool go_left;
        if (it != x.entries.end() && it->first == f) {
            go_left = it->second < node.threshold;
        } else {
            go_left = node.default_left;
        }
        i = static_cast<std::size_t>(go_left ? node.left : node.right);
    }
    return nodes[i].value;
}

int RegressionTree::depth() const {
    // Children are always appended after their parent.
    std::vector<int> level(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].is_leaf()) continue;
        for (auto child : {nodes[i].left, nodes[i].right}) {
            level[static_cast<std::size_t>(child)] = level[i] + 1;
            deepest = std::max(deepest, level[i] + 1);
        }
    }
    return deepest;
}

double GbdtModel::margin(const FeatureVector& x) const {
    for (const auto& [index, value] : x.entries) {
        if (index >= n_features_) {
            throw data_error("gbdt: feature index " + std::to_string(index) + " out of range (model has " +
                             std::to_string(n_features_) + " features)");
        }
    }
    double sum = 0.0;
    for (const auto& tree : trees_) sum += tree.predict(x);
    return clamp_log_odds(base_score_ + params_.learning_rate * sum);
}

ClassifierOutput GbdtModel::predict(const FeatureVector& x) const { return ClassifierOutput::from_log_odds(margin(x)); }

ClassifierOutput predict_word(const GbdtModel& model, const FeatureVector& x) { return model.predict(x); }

namespace {

struct ColumnEntry {
    std::uint32_t row;
    double value;
};

struct SplitCandidate {
    double gain = 0.0;
    std::int32_t feature = -1;
    double threshold = 0.0;
    bool default_left = true;
};

constexpr double kMinSplitGain = 1e-10;

double log_loss(double margin, double y) {
    // log(1 + exp(-s * m)) with s = +1 for the positive class.
    const double z = y > 0.5 ? -margin : margin;
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double midpoint(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return mid > lo ? mid : hi;
}

class TreeBuilder {
public:
    TreeBuilder(std::span<const FeatureVector> rows, const std::vector<std::vector<ColumnEntry>>& columns,
                const GbdtParams& params)
        : rows_(rows), columns_(columns), params_(params) {}

    RegressionTree build(const std::vector<double>& grad, const std::vector<double>& hess,
                         const std::vector<bool>& in_sample) {
        RegressionTree tree;
        tree.nodes.emplace_back();
        node_g_.assign(1, 0.0);
        node_h_.assign(1, 0.0);
        position_.assign(rows_.size(), -1);
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (!in_sample[r]) continue;
            position_[r] = 0;
            node_g_[0] += grad[r];
            node_h_[0] += hess[r];
        }
        std::vector<std::int32_t> frontier{0};
        for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
            const auto best = find_splits(frontier, grad, hess, tree.nodes.size());
            std::vector<std::int32_t> next;
            for (auto n : frontier) {
                const auto& split = best[static_cast<std::size_t>(n)];
                if (split.feature < 0) continue;
                auto& node = tree.nodes[static_cast<std::size_t>(n)];
                node.feature = split.feature;
                node.threshold = split.threshold;
                node.default_left = split.default_left;
                node.left = static_cast<std::int32_t>(tree.nodes.size());
                node.right = node.left + 1;
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                next.push_back(node.left);
                next.push_back(node.right);
            }
            node_g_.resize(tree.nodes.size(), 0.0);
            node_h_.resize(tree.nodes.size(), 0.0);
            for (std::size_t r = 0; r < rows_.size(); ++r) {
                const auto n = position_[r];
                if (n < 0) continue;
                const auto& node = tree.nodes[static_cast<std::size_t>(n)];
                if (node.is_leaf()) continue;
                const double w = rows_[r].weight(static_cast<std::uint32_t>(node.feature));
                const bool present = w != 0.0;
                const bool left = present ? w < node.threshold : node.default_left;
                const auto child = left ? node.left : node.right;
                position_[r] = child;
                node_g_[static_cast<std::size_t>(child)] += grad[r];
                node_h_[static_cast<std::size_t>(child)] += hess[r];
            }
            frontier = std::move(next);
        }
        for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
            if (tree.nodes[n].is_leaf()) tree.nodes[n].value = -node_g_[n] / (node_h_[n] + params_.l2_reg);
        }
        return tree;
    }

private:
    std::vector<SplitCandidate> find_splits(const std::vector<std::int32_t>& frontier, const std::vector<double>& grad,
                                            const std::vector<double>& hess, std::size_t n_nodes) {
        std::vector<SplitCandidate> best(n_nodes);
        std::vector<char> active(n_nodes, 0);
        for (auto n : frontier) active[static_cast<std::size_t>(n)] = 1;

        std::vector<double> present_g(n_nodes), present_h(n_nodes), prefix_g(n_nodes), prefix_h(n_nodes);
        std::vector<double> last_value(n_nodes);
        std::vector<char> started(n_nodes);
        const double lambda = params_.l2_reg;

        auto score = [lambda](double g, double h) { return g * g / (h + lambda); };

        for (std::size_t f = 0; f < columns_.size(); ++f) {
            const auto& column = columns_[f];
            if (column.empty()) continue;
            for (auto n : frontier) {
                const auto k = static_cast<std::size_t>(n);
                present_g[k] = present_h[k] = prefix_g[k] = prefix_h[k] = 0.0;
                started[k] = 0;
            }
            for (const auto& e : column) {
                const auto n = position_[e.row];
                if (n < 0 || !active[static_cast<std::size_t>(n)]) continue;
                present_g[static_cast<std::size_t>(n)] += grad[e.row];
                present_h[static_cast<std::size_t>(n)] += hess[e.row];
            }

            auto consider = [&](std::size_t k, double left_g, double left_h, double threshold, bool default_left) {
                const double total_g = node_g_[k], total_h = node_h_[k];
                const double right_g = total_g - left_g, right_h = total_h - left_h;
                if (left_h < params_.min_leaf_weight || right_h < params_.min_leaf_weight) return;
                const double gain =
                    0.5 * (score(left_g, left_h) + score(right_g, right_h) - score(total_g, total_h));
                if (gain > kMinSplitGain && gain > best[k].gain) {
                    best[k] = {gain, static_cast<std::int32_t>(f), threshold, default_left};
                }
            };

            for (const auto& e : column) {
                const auto n = position_[e.row];
                if (n < 0 || !active[static_cast<std::size_t>(n)]) continue;
                const auto k = static_cast<std::size_t>(n);
                const double missing_g = node_g_[k] - present_g[k];
                const double missing_h = node_h_[k] - present_h[k];
                if (!started[k]) {
                    // Only absent rows go left; every present row goes right.
                    consider(k, missing_g, missing_h, e.value, true);
                    started[k] = 1;
                } else if (e.value != last_value[k]) {
                    const double threshold = midpoint(last_value[k], e.value);
                    consider(k, prefix_g[k] + missing_g, prefix_h[k] + missing_h, threshold, true);
                    consider(k, prefix_g[k], prefix_h[k], threshold, false);
                }
                prefix_g[k] += grad[e.row];
                prefix_h[k] += hess[e.row];
                last_value[k] = e.value;
            }
        }
        return best;
    }

    std::span<const FeatureVector> rows_;
    const std::vector<std::vector<ColumnEntry>>& columns_;
    const GbdtParams& params_;
    std::vector<std::int32_t> position_;
    std::vector<double> node_g_, node_h_;
};

}  // namespace

GbdtModel train_gbdt(std::span<const FeatureVector> vectors, std::span<const Label> labels, std::size_t n_features,
                     const GbdtParams& params, std::vector<double>* loss_history) {
    params.validate();
    if (vectors.size() != labels.size()) throw data_error("gbdt: vectors and labels differ in length");
    if (n_features == 0) throw data_error("gbdt: empty feature space");
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Bullshit));
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos < 2 || n_neg < 2) {
        throw data_error("gbdt: need at least 2 examples of each class (got " + std::to_string(n_pos) +
                         " bullshit, " + std::to_string(n_neg) + " reference)");
    }

    std::vector<std::vector<ColumnEntry>> columns(n_features);
    for (std::size_t r = 0; r < vectors.size(); ++r) {
        for (const auto& [index, value] : vectors[r].entries) {
            if (index >= n_features) {
                throw data_error("gbdt: feature index " + std::to_string(index) + " out of range in row " +
                                 std::to_string(r));
            }
            columns[index].push_back({static_cast<std::uint32_t>(r), value});
        }
    }
    for (auto& column : columns) {
        std::sort(column.begin(), column.end(), [](const ColumnEntry& a, const ColumnEntry& b) {
            return a.value < b.value || (a.value == b.value && a.row < b.row);
        });
    }

    GbdtModel model;
    model.params_ = params;
    model.n_features_ = n_features;
    model.base_score_ = std::log(static_cast<double>(n_pos) / static_cast<double>(n_neg));

    const std::size_t n = vectors.size();
    std::vector<double> y(n), margin(n, model.base_score_), grad(n), hess(n);
    for (std::size_t r = 0; r < n; ++r) y[r] = labels[r] == Label::Bullshit ? 1.0 : 0.0;

    auto mean_loss = [&] {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) total += log_loss(margin[r], y[r]);
        return total / static_cast<double>(n);
    };
    if (loss_history) {
        loss_history->clear();
        loss_history->push_back(mean_loss());
    }

    Rng rng(params.subsample_seed);
    std::vector<bool> in_sample(n, true);
    TreeBuilder builder(vectors, columns, params);
    model.trees_.reserve(static_cast<std::size_t>(params.n_trees));
    for (int round = 0; round < params.n_trees; ++round) {
        for (std::size_t r = 0; r < n; ++r) {
            const double p = sigmoid(margin[r]);
            grad[r] = p - y[r];
            hess[r] = std::max(p * (1.0 - p), 1e-16);
            if (params.subsample < 1.0) in_sample[r] = rng.uniform() < params.subsample;
        }
        auto tree = builder.build(grad, hess, in_sample);
        for (std::size_t r = 0; r < n; ++r) margin[r] += params.learning_rate * tree.predict(vectors[r]);
        model.trees_.push_back(std::move(tree));
        if (loss_history) loss_history->push_back(mean_loss());
    }
    return model;
}

json GbdtModel::to_json() const {
    json trees = json::array();
    for (const auto& tree : trees_) {
        json nodes = json::array();
        for (const auto& node : tree.nodes) {
            if (node.is_leaf()) {
                nodes.push_back({{"leaf", node.value}});
            } else {
                nodes.push_back({{"feature", node.feature},
                                 {"threshold", node.threshold},
                                 {"missing", node.default_left ? "left" : "right"},
                                 {"left", node.left},
                                 {"right", node.right}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    return {
        {"objective", "binary:logistic"},
        {"positive_class", "bullshit"},
        {"n_features", n_features_},
        {"base_score", base_score_},
        {"params",
         {{"n_trees", params_.n_trees},
          {"max_depth", params_.max_depth},
          {"learning_rate", params_.learning_rate},
          {"l2_reg", params_.l2_reg},
          {"min_leaf_weight", params_.min_leaf_weight},
          {"subsample", params_.subsample},
          {"subsample_seed", params_.subsample_seed}}},
        {"trees", std::move(trees)},
    };
}

GbdtModel GbdtModel::from_json(const json& j) {
    GbdtModel model;
    try {
        const auto& p = j.at("params");
        model.params_.n_trees = p.at("n_trees").get<int>();
        model.params_.max_depth = p.at("max_depth").get<int>();
        model.params_.learning_rate = p.at("learning_rate").get<double>();
        model.params_.l2_reg = p.at("l2_reg").get<double>();
        model.params_.min_leaf_weight = p.at("min_leaf_weight").get<double>();
        model.params_.subsample = p.at("subsample").get<double>();
        model.params_.subsample_seed = p.at("subsample_seed").get<std::uint64_t>();
        model.n_features_ = j.at("n_features").get<std::size_t>();
        model.base_score_ = j.at("base_score").get<double>();
        for (const auto& nodes : j.at("trees")) {
            RegressionTree tree;
            for (const auto& obj : nodes) {
                TreeNode node;
                if (obj.contains("leaf")) {
                    node.value = obj.at("leaf").get<double>();
                } else {
                    node.feature = obj.at("feature").get<std::int32_t>();
                    node.threshold = obj.at("threshold").get<double>();
                    node.default_left = obj.at("missing").get<std::string>() == "left";
                    node.left = obj.at("left").get<std::int32_t>();
                    node.right = obj.at("right").get<std::int32_t>();
                }
                tree.nodes.push_back(node);
            }
            const auto size = static_cast<std::int32_t>(tree.nodes.size());
            if (size == 0) throw data_error("gbdt: empty tree");
            for (std::int32_t i = 0; i < size; ++i) {
                const auto& node = tree.nodes[static_cast<std::size_t>(i)];
                if (node.is_leaf()) continue;
                if (node.left <= i || node.right <= i || node.left >= size || node.right >= size ||
                    static_cast<std::size_t>(node.feature) >= model.n_features_) {
                    throw data_error("gbdt: malformed tree node " + std::to_string(i));
                }
            }
            model.trees_.push_back(std::move(tree));
        }
    } catch (const json::exception& e) {
        throw data_error(std::string("gbdt: malformed model: ") + e.what());
    }
    return model;
}

}  // namespace msd
