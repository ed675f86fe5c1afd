#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msd/corpus.hpp"
#include "msd/rng.hpp"

namespace msd {

/// Parameters of the synthetic two-register corpus.
///
/// Every document is a stream of background words drawn from a Zipf
/// distribution over a shared vocabulary. Two optional signals are mixed in:
///  - marker terms: class-specific words emitted at `marker_rate` per slot;
///  - context pairs: a shared anchor word immediately followed by a neighbor
///    from a class-specific set, emitted at `context_rate`. The other class's
///    neighbors are scattered at the same rate, so unigram counts carry no
///    class information and only word order does.
struct SynthSpec {
    std::size_t n_per_class = 50;
    std::size_t marker_terms_per_class = 30;
    std::size_t shared_vocab_size = 500;
    std::size_t min_tokens = 200;
    std::size_t max_tokens = 400;
    double marker_rate = 0.05;
    std::size_t context_terms = 0;
    double context_rate = 0.0;
    double zipf_exponent = 1.0;
    std::uint64_t seed = 7;

    /// Throws a data error on degenerate settings.
    void validate() const;
};

/// Which class each signal imitates in one generated document; nullopt
/// leaves that signal out.
struct Register {
    std::optional<Label> markers;
    std::optional<Label> context;

    static Register of(Label label, bool with_context) {
        return {label, with_context ? std::optional<Label>(label) : std::nullopt};
    }
};

class SynthGenerator {
public:
    explicit SynthGenerator(SynthSpec spec);

    const SynthSpec& spec() const { return spec_; }

    std::string text(const Register& reg, Rng& rng) const;

    const std::vector<std::string>& shared_vocab() const { return shared_; }
    const std::vector<std::string>& markers(Label label) const;
    const std::vector<std::string>& context_anchors() const { return anchors_; }
    const std::vector<std::string>& context_neighbors(Label label) const;

private:
    const std::string& background(Rng& rng) const;

    SynthSpec spec_;
    std::vector<std::string> shared_;
    std::vector<double> shared_cdf_;
    std::vector<std::string> bullshit_markers_, reference_markers_;
    std::vector<std::string> anchors_;
    std::vector<std::string> bullshit_neighbors_, reference_neighbors_;
};

/// n_per_class documents of each label, interleaved, ids "bs-NNNN" and
/// "ref-NNNN". Byte-reproducible for a given spec.
LabeledCorpus synth_corpus(const SynthSpec& spec);

/// Group values and categories used by the experiment layouts below.
inline constexpr std::string_view kBullshitGroup = "bs-register";
inline constexpr std::string_view kReferenceGroup = "ref-register";
inline constexpr std::string_view kFlagField = "flag";
inline constexpr std::string_view kFlagBullshit = "bs";
inline constexpr std::string_view kFlagContrast = "contrast";
const std::vector<std::string>& factorial_categories();

/// Unlabeled two-arm corpus: n_per_class documents per group, the `group`
/// field naming the register each was drawn from.
LabeledCorpus synth_two_group(const SynthSpec& spec);

/// Unlabeled 2 x 5 corpus with n_per_class documents per cell. The flag lives
/// in metadata field "flag", the class in `category`. When
/// `register_linked` is false every document's register is a fair coin
/// flip, independent of its cell.
LabeledCorpus synth_factorial(const SynthSpec& spec, bool register_linked);

}  // namespace msd
