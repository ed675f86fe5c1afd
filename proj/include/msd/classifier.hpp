#pragma once

#include <algorithm>
#include <cmath>

#include "msd/corpus.hpp"

namespace msd {

/// Log-odds are clamped to this bound so neither class probability is ever
/// exactly 0 or 1.
inline constexpr double kMaxLogOdds = 36.7;

inline double clamp_log_odds(double margin) { return std::clamp(margin, -kMaxLogOdds, kMaxLogOdds); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Decision of a binary classifier: the predicted label and the probability
/// it assigns to that label.
struct ClassifierOutput {
    Label label = Label::Bullshit;
    /// max(p, 1 - p) where p = P(BULLSHIT).
    double confidence = 0.5;
    /// 1 - confidence, kept separately because it underflows `confidence`
    /// long before it underflows itself (at 36.7 log-odds it is ~1e-16).
    double residual = 0.5;

    /// From log-odds of BULLSHIT. Ties (margin 0) resolve to BULLSHIT.
    static ClassifierOutput from_log_odds(double margin) {
        const double m = clamp_log_odds(margin);
        ClassifierOutput out;
        out.label = m >= 0.0 ? Label::Bullshit : Label::Reference;
        out.residual = sigmoid(-std::abs(m));
        out.confidence = 1.0 - out.residual;
        return out;
    }

    static ClassifierOutput from_confidence(Label label, double confidence) {
        return {label, confidence, 1.0 - confidence};
    }

    double p_bullshit() const { return label == Label::Bullshit ? confidence : residual; }
};

}  // namespace msd
