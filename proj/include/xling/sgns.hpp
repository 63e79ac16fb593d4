#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xling/embedding.hpp"
#include "xling/rng.hpp"
#include "xling/text_io.hpp"

namespace xling {

// Lemmatized, pre-tokenized text. Lemmatization happens upstream; this
// library never sees raw surface forms.
struct Corpus {
    std::vector<std::vector<std::string>> sentences;
    std::string language;

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& s : sentences) n += s.size();
        return n;
    }
};

// One sentence per line, tokens space-separated.
inline Corpus load_corpus(const std::filesystem::path& path, std::string language = "") {
    Corpus corpus;
    corpus.language = std::move(language);
    const std::string text = read_file(path);
    for (const auto line : split_lines(text)) {
        const auto fields = split_ws(line);
        if (fields.empty()) continue;
        std::vector<std::string> sent;
        sent.reserve(fields.size());
        for (const auto f : fields) sent.emplace_back(f);
        corpus.sentences.push_back(std::move(sent));
    }
    return corpus;
}

struct SgnsConfig {
    int window = 5;
    int min_count = 5;
    int negatives = 5;
    int epochs = 5;
    double initial_lr = 0.025;
    double final_lr = 0.0001;
    std::uint64_t seed = 1;
    std::optional<double> subsample_threshold;  // none: corpora here are small

    void validate() const {
        if (window < 1) throw std::invalid_argument("sgns: window must be >= 1");
        if (min_count < 1) throw std::invalid_argument("sgns: min_count must be >= 1");
        if (negatives < 1) throw std::invalid_argument("sgns: negatives must be >= 1");
        if (epochs < 0) throw std::invalid_argument("sgns: epochs must be >= 0");
        if (!(initial_lr > final_lr && final_lr > 0.0))
            throw std::invalid_argument("sgns: require initial_lr > final_lr > 0");
        if (subsample_threshold && *subsample_threshold <= 0.0)
            throw std::invalid_argument("sgns: subsample_threshold must be positive");
    }
};

struct ExpandReport {
    std::size_t kept = 0;
    std::size_t added = 0;
    std::size_t rejected_below_min_count = 0;
};

// Appends corpus tokens that are new to the table and occur at least
// min_count times, initialized uniformly in [-0.5/dim, +0.5/dim] (word2vec
// input-vector init: new words start small-norm next to pretrained rows).
// Existing tokens are kept untouched regardless of their corpus count.
inline EmbeddingTable expand_vocabulary(const EmbeddingTable& table, const Corpus& corpus,
                                        int min_count, std::uint64_t seed,
                                        ExpandReport* report = nullptr) {
    if (min_count < 1) throw std::invalid_argument("expand_vocabulary: min_count must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> first_seen;
    for (const auto& sent : corpus.sentences) {
        for (const auto& tok : sent) {
            auto [it, inserted] = counts.emplace(tok, 1);
            if (inserted) first_seen.push_back(tok);
            else ++it->second;
        }
    }

    EmbeddingTable out = table;
    ExpandReport rep;
    rep.kept = table.size();
    std::mt19937_64 rng(seed);
    std::vector<double> vec(table.dim);
    const double half = 0.5 / static_cast<double>(table.dim);
    for (const auto& tok : first_seen) {
        if (out.index.contains(tok)) continue;
        if (counts[tok] < static_cast<std::size_t>(min_count)) {
            ++rep.rejected_below_min_count;
            continue;
        }
        for (double& v : vec) v = uniform_range(rng, -half, half);
        out.append(tok, vec);
        ++rep.added;
    }
    if (report) *report = rep;
    return out;
}

namespace detail {

inline double log_sigmoid(double x) {
    // -softplus(-x), stable on both tails
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

struct SgnsResult {
    EmbeddingTable table;
    std::vector<double> loss_trace;  // mean loss per epoch
};

// Skip-gram with negative sampling over an already-expanded table. Only input
// vectors are the product; the context matrix is allocated zero-initialized
// (pretrained tables carry no context half) and discarded. Single-threaded
// sequential SGD: a fixed seed reproduces the table bit-for-bit.
inline SgnsResult finetune_sgns(const EmbeddingTable& table, const Corpus& corpus,
                                const SgnsConfig& config) {
    config.validate();
    SgnsResult result{table, {}};
    if (config.epochs == 0) return result;

    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& sent : corpus.sentences)
        for (const auto& tok : sent) ++counts[tok];

    // Training vocabulary: in-table tokens meeting min_count. Others are
    // dropped from sentences before windowing, word2vec style.
    std::vector<std::size_t> vocab_rows;
    std::vector<double> vocab_weight;  // unigram^0.75
    std::unordered_map<std::size_t, std::size_t> row_to_vocab;
    std::size_t corpus_tokens = 0;
    for (std::size_t r = 0; r < table.size(); ++r) {
        const auto it = counts.find(table.tokens[r]);
        if (it == counts.end() || it->second < static_cast<std::size_t>(config.min_count)) continue;
        row_to_vocab.emplace(r, vocab_rows.size());
        vocab_rows.push_back(r);
        vocab_weight.push_back(std::pow(static_cast<double>(it->second), 0.75));
        corpus_tokens += it->second;
    }
    if (vocab_rows.empty())
        throw std::runtime_error("finetune_sgns: empty effective corpus (no token meets min_count)");

    std::vector<double> cumulative(vocab_weight.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab_weight.size(); ++i) {
        acc += vocab_weight[i];
        cumulative[i] = acc;
    }

    std::vector<std::vector<std::size_t>> filtered;
    filtered.reserve(corpus.sentences.size());
    for (const auto& sent : corpus.sentences) {
        std::vector<std::size_t> rows;
        for (const auto& tok : sent) {
            const auto row = table.lookup(tok);
            if (!row) continue;
            if (row_to_vocab.contains(*row)) rows.push_back(*row);
        }
        if (rows.size() >= 2) filtered.push_back(std::move(rows));
    }

    // Pair budget for the linear learning-rate schedule (pre-subsampling
    // estimate; the rate floors at final_lr regardless).
    std::size_t pairs_per_epoch = 0;
    const auto window = static_cast<std::size_t>(config.window);
    for (const auto& rows : filtered) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t lo = i > window ? i - window : 0;
            const std::size_t hi = std::min(rows.size() - 1, i + window);
            pairs_per_epoch += hi - lo;  // excludes j == i
        }
    }
    if (pairs_per_epoch == 0)
        throw std::runtime_error("finetune_sgns: empty effective corpus (no co-occurrence pairs)");
    const double total_pairs =
        static_cast<double>(pairs_per_epoch) * static_cast<double>(config.epochs);

    Matrix& input = result.table.vectors;
    Matrix context(table.size(), table.dim, 0.0);
    std::mt19937_64 rng(config.seed);
    const std::size_t dim = table.dim;

    const auto draw_negative = [&]() -> std::size_t {
        const double u = uniform01(rng) * acc;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const std::size_t idx = std::min(
            static_cast<std::size_t>(it - cumulative.begin()), vocab_rows.size() - 1);
        return vocab_rows[idx];
    };

    std::vector<double> center_grad(dim);
    std::vector<std::size_t> kept;
    double pairs_done = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t epoch_pairs = 0;
        for (const auto& rows : filtered) {
            kept.clear();
            if (config.subsample_threshold) {
                const double t = *config.subsample_threshold;
                for (const std::size_t r : rows) {
                    const double f = static_cast<double>(counts[table.tokens[r]]) /
                                     static_cast<double>(corpus_tokens);
                    const double keep = (std::sqrt(f / t) + 1.0) * (t / f);
                    if (keep >= 1.0 || uniform01(rng) < keep) kept.push_back(r);
                }
            } else {
                kept.assign(rows.begin(), rows.end());
            }
            for (std::size_t i = 0; i < kept.size(); ++i) {
                const std::size_t center = kept[i];
                double* v = input.row(center).data();
                const std::size_t lo = i > window ? i - window : 0;
                const std::size_t hi = std::min(kept.size() - 1, i + window);
                for (std::size_t j = lo; j <= hi; ++j) {
                    if (j == i) continue;
                    const double lr = std::max(
                        config.final_lr,
                        config.initial_lr -
                            (config.initial_lr - config.final_lr) * (pairs_done / total_pairs));
                    pairs_done += 1.0;
                    const std::size_t positive = kept[j];
                    std::fill(center_grad.begin(), center_grad.end(), 0.0);
                    double pair_loss = 0.0;
                    for (int s = 0; s <= config.negatives; ++s) {
                        std::size_t target;
                        double label;
                        if (s == 0) {
                            target = positive;
                            label = 1.0;
                        } else {
                            target = draw_negative();
                            if (target == positive) continue;  // word2vec: skip, no redraw
                            label = 0.0;
                        }
                        double* u = context.row(target).data();
                        double score = 0.0;
                        for (std::size_t d = 0; d < dim; ++d) score += v[d] * u[d];
                        pair_loss -= label == 1.0 ? detail::log_sigmoid(score)
                                                  : detail::log_sigmoid(-score);
                        const double g = (label - detail::sigmoid(score)) * lr;
                        for (std::size_t d = 0; d < dim; ++d) {
                            center_grad[d] += g * u[d];
                            u[d] += g * v[d];
                        }
                    }
                    for (std::size_t d = 0; d < dim; ++d) v[d] += center_grad[d];
                    epoch_loss += pair_loss;
                    ++epoch_pairs;
                }
            }
        }
        result.loss_trace.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs)
                                                : 0.0);
    }
    return result;
}

}  // namespace xling
