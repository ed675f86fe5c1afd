#include "msd/score.hpp"

#include <algorithm>
#include <cmath>

#include "msd/error.hpp"

namespace msd {

using nlohmann::json;

void ScoreParams::validate() const {
    if (!std::isfinite(offset)) throw data_error("score: offset must be finite");
    if (!(scale > 0.0 && std::isfinite(scale))) throw data_error("score: scale must be positive");
    if (!(log_base > 1.0 && std::isfinite(log_base))) throw data_error("score: log base must exceed 1");
    if (!(clip > 0.0 && std::isfinite(clip))) throw data_error("score: clip must be positive");
}

json ScoreParams::to_json() const {
    return {{"offset", offset}, {"scale", scale}, {"log_base", log_base}, {"clip", clip}};
}

ScoreParams ScoreParams::from_json(const json& j) {
    ScoreParams p;
    try {
        p.offset = j.at("offset").get<double>();
        p.scale = j.at("scale").get<double>();
        p.log_base = j.at("log_base").get<double>();
        p.clip = j.at("clip").get<double>();
    } catch (const json::exception& e) {
        throw data_error(std::string("score: malformed parameters: ") + e.what());
    }
    p.validate();
    return p;
}

double confidence_to_score(const ClassifierOutput& output, const ScoreParams& params) {
    params.validate();
    const double residual = output.residual;
    if (!(residual > 0.0 && residual < 1.0)) {
        throw data_error("score: confidence must lie strictly inside (0, 1)");
    }
    const double log_residual = std::log(residual) / std::log(params.log_base);
    const double raw = output.label == Label::Bullshit ? params.offset - params.scale * log_residual
                                                       : params.offset + params.scale * log_residual;
    return std::clamp(raw, -params.clip, params.clip);
}

double combine(double word_score, double context_score) { return (word_score + context_score) / 2.0; }

double to_bs_meter(double combined, double clip) {
    if (!(clip > 0.0)) throw data_error("score: clip must be positive");
    if (!(combined >= -clip && combined <= clip)) {
        throw data_error("score: combined score " + std::to_string(combined) + " outside [-clip, clip]");
    }
    return (combined + clip) * (50.0 / clip);
}

MsdScore make_score(std::string doc_id, const ClassifierOutput& word, const ClassifierOutput& context,
                    const ScoreParams& params) {
    MsdScore s;
    s.doc_id = std::move(doc_id);
    s.word = word;
    s.context = context;
    s.word_score = confidence_to_score(word, params);
    s.context_score = confidence_to_score(context, params);
    s.combined = combine(s.word_score, s.context_score);
    s.bs_meter = to_bs_meter(s.combined, params.clip);
    return s;
}

}  // namespace msd
