#pragma once

#include <string>

#include <json.hpp>

#include "msd/classifier.hpp"

namespace msd {

/// Constants of the signed log-confidence score.
///
/// score = offset - scale * log_b(1 - confidence) for BULLSHIT and
/// score = offset + scale * log_b(1 - confidence) for REFERENCE, clipped to
/// [-clip, clip].
struct ScoreParams {
    double offset = 0.0;
    double scale = 1.0;
    double log_base = 10.0;
    double clip = 5.0;

    void validate() const;

    nlohmann::json to_json() const;
    static ScoreParams from_json(const nlohmann::json& j);
};

struct MsdScore {
    std::string doc_id;
    double word_score = 0.0;
    double context_score = 0.0;
    double combined = 0.0;
    double bs_meter = 50.0;
    ClassifierOutput word;
    ClassifierOutput context;
};

/// Signed log score of one classifier decision. Positive means BULLSHIT.
/// Throws a data error if the confidence is not inside (0, 1).
double confidence_to_score(const ClassifierOutput& output, const ScoreParams& params = {});

/// Arithmetic mean of the two classifier scores.
double combine(double word_score, double context_score);

/// Linear map of [-clip, clip] onto [0, 100]; with clip 5 this is
/// (combined + 5) * 10. Throws a data error outside the range.
double to_bs_meter(double combined, double clip = 5.0);

/// Assembles a full score from the two classifier decisions.
MsdScore make_score(std::string doc_id, const ClassifierOutput& word, const ClassifierOutput& context,
                    const ScoreParams& params = {});

}  // namespace msd
