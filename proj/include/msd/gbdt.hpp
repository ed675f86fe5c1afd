#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "msd/classifier.hpp"
#include "msd/corpus.hpp"
#include "msd/tfidf.hpp"

namespace msd {

struct GbdtParams {
    int n_trees = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    double l2_reg = 1.0;
    /// Minimum hessian sum in each child of a split.
    double min_leaf_weight = 1.0;
    /// Row sampling fraction per round; 1.0 disables sampling.
    double subsample = 1.0;
    std::uint64_t subsample_seed = 0;

    void validate() const;
};

/// Node of a flattened regression tree. Split nodes route `x < threshold`
/// left; features absent from the sparse vector follow `default_left`.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    std::int32_t left = -1;
    std::int32_t right = -1;
    /// Leaf output (unscaled Newton step).
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(const FeatureVector& x) const;
    int depth() const;
};

/// Additive tree ensemble with a logistic link:
/// P(BULLSHIT) = sigmoid(base_score + learning_rate * sum of tree outputs).
class GbdtModel {
public:
    const GbdtParams& params() const { return params_; }
    double base_score() const { return base_score_; }
    std::size_t n_features() const { return n_features_; }
    const std::vector<RegressionTree>& trees() const { return trees_; }

    /// Clamped log-odds of BULLSHIT. Throws a data error on feature indices
    /// outside the model's feature space.
    double margin(const FeatureVector& x) const;
    ClassifierOutput predict(const FeatureVector& x) const;

    nlohmann::json to_json() const;
    static GbdtModel from_json(const nlohmann::json& j);

private:
    friend GbdtModel train_gbdt(std::span<const FeatureVector>, std::span<const Label>, std::size_t,
                                const GbdtParams&, std::vector<double>*);

    GbdtParams params_;
    double base_score_ = 0.0;
    std::size_t n_features_ = 0;
    std::vector<RegressionTree> trees_;
};

/// Exact greedy second-order boosting on log-loss with sparsity-aware splits.
/// Label BULLSHIT is the positive class. If `loss_history` is given it
/// receives the mean training log-loss before the first round and after each
/// round (n_trees + 1 values).
GbdtModel train_gbdt(std::span<const FeatureVector> vectors, std::span<const Label> labels, std::size_t n_features,
                     const GbdtParams& params = {}, std::vector<double>* loss_history = nullptr);

ClassifierOutput predict_word(const GbdtModel& model, const FeatureVector& x);

}  // namespace msd
