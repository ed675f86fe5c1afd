#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "msd/context.hpp"
#include "msd/rng.hpp"
#include "msd/synth.hpp"

namespace msd::fixtures {

/// Classes share markers and word frequencies; only which neighbor follows
/// an anchor word differs. Short documents, many of them.
inline SynthSpec context_only_spec(std::uint64_t seed) {
    SynthSpec s;
    s.n_per_class = 250;
    s.shared_vocab_size = 100;
    s.min_tokens = 30;
    s.max_tokens = 60;
    s.marker_rate = 0.0;
    s.context_terms = 10;
    s.context_rate = 0.2;
    s.seed = seed;
    return s;
}

struct GradientCheck {
    double max_relative_error = 0.0;
    double norm_relative_error = 0.0;
    std::size_t n_params = 0;
};

/// Central differences over every parameter of a small network evaluated on
/// `ids`. The relative error of a component is |a - n| / max(|a| + |n|, floor).
inline GradientCheck check_gradient(ContextNetwork& net, const std::vector<std::int32_t>& ids, double target,
                                    double step = 1e-5, double floor = 1e-7) {
    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(net.parameters().size());
    net.loss_and_gradient(ids, target, analytic);
    Eigen::VectorXd numeric(analytic.size());
    Eigen::VectorXd scratch(analytic.size());
    auto& p = net.parameters();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + step;
        scratch.setZero();
        const double up = net.loss_and_gradient(ids, target, scratch);
        p[i] = saved - step;
        scratch.setZero();
        const double down = net.loss_and_gradient(ids, target, scratch);
        p[i] = saved;
        numeric[i] = (up - down) / (2.0 * step);
    }
    GradientCheck out;
    out.n_params = static_cast<std::size_t>(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), floor);
        out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic[i] - numeric[i]) / denom);
    }
    out.norm_relative_error = (analytic - numeric).norm() / std::max(analytic.norm() + numeric.norm(), floor);
    return out;
}

/// A 5-token example on a network with every parameter group active.
inline ContextNetwork gradient_fixture_network() {
    ContextNetwork net(9, 4, 2);
    net.initialize(3, 0.5);
    Rng rng(17);
    for (auto& v : net.parameters()) v += rng.uniform(-0.3, 0.3);
    return net;
}

inline const std::vector<std::int32_t>& gradient_fixture_tokens() {
    static const std::vector<std::int32_t> ids = {5, 7, 4, 8, 5};
    return ids;
}

}  // namespace msd::fixtures
