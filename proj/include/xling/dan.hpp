#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/align.hpp"
#include "xling/embedding.hpp"
#include "xling/nn.hpp"
#include "xling/rng.hpp"

namespace xling {

enum class OovPolicy { skip, zero_on_empty };

// Deep Averaging Network: mean-pooled word vectors through a two-layer dense
// tail. The pooling is fixed; only the tail has parameters.
struct DanEncoder {
    FeedForwardNet tail;
    OovPolicy oov_policy = OovPolicy::zero_on_empty;

    std::size_t input_dim() const { return tail.input_dim(); }
    std::size_t output_dim() const { return tail.output_dim(); }

    void validate() const {
        if (tail.layers.size() != 2)
            throw std::invalid_argument("dan: tail must have exactly 2 layers");
        tail.validate();
    }
};

inline DanEncoder make_dan_encoder(std::size_t dim, std::mt19937_64& rng,
                                   Activation activation = Activation::tanh) {
    DanEncoder enc;
    enc.tail = make_net({dim, dim, dim}, {activation, activation});
    init_glorot(enc.tail, rng);
    return enc;
}

// Tail = two identity layers (W = I, b = 0): encode() reduces to plain mean
// pooling. Useful as a fixture and as a pass-through starting point.
inline DanEncoder make_identity_tail_encoder(std::size_t dim) {
    DanEncoder enc;
    enc.tail = make_net({dim, dim, dim}, {Activation::identity, Activation::identity});
    enc.tail.layers[0].weights = Matrix::identity(dim);
    enc.tail.layers[1].weights = Matrix::identity(dim);
    return enc;
}

struct PooledSentence {
    std::vector<double> vector;
    std::size_t found = 0;
    std::size_t total = 0;

    double coverage() const {
        return total == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(total);
    }
};

// Mean over the multiset of looked-up rows, accumulated in ascending row
// order with weights count/total. This makes the result bit-identical under
// token permutation and under uniform duplication of every token.
inline PooledSentence pool_tokens(const EmbeddingTable& table,
                                  const std::vector<std::string>& tokens,
                                  const LinearMap* map = nullptr) {
    if (tokens.empty()) throw std::invalid_argument("pool_tokens: empty token list");
    const std::size_t out_dim = map ? map->matrix.cols : table.dim;
    if (map && map->matrix.rows != table.dim)
        throw std::invalid_argument("pool_tokens: map input dim != table dim");

    std::map<std::size_t, std::size_t> row_counts;  // ordered: canonical accumulation
    std::size_t found = 0;
    for (const auto& tok : tokens) {
        const auto row = table.lookup(tok);
        if (!row) continue;
        ++row_counts[*row];
        ++found;
    }

    PooledSentence pooled;
    pooled.total = tokens.size();
    pooled.found = found;
    pooled.vector.assign(out_dim, 0.0);
    if (found == 0) return pooled;

    for (const auto& [row, count] : row_counts) {
        const double w = static_cast<double>(count) / static_cast<double>(found);
        if (map) {
            const auto mapped = apply_row(table.row(row), map->matrix);
            for (std::size_t j = 0; j < out_dim; ++j) pooled.vector[j] += w * mapped[j];
        } else {
            const auto vec = table.row(row);
            for (std::size_t j = 0; j < out_dim; ++j) pooled.vector[j] += w * vec[j];
        }
    }
    return pooled;
}

struct EncodeResult {
    std::vector<double> vector;
    double coverage = 0.0;
    bool empty = false;  // every token was out of vocabulary
};

inline EncodeResult encode(const DanEncoder& encoder, const EmbeddingTable& table,
                           const std::vector<std::string>& tokens,
                           const LinearMap* map = nullptr) {
    encoder.validate();
    const auto pooled = pool_tokens(table, tokens, map);
    if (pooled.vector.size() != encoder.input_dim())
        throw std::invalid_argument("encode: embedding dim != tail input dim");
    EncodeResult result;
    result.coverage = pooled.coverage();
    if (pooled.found == 0) {
        if (encoder.oov_policy == OovPolicy::skip)
            throw std::runtime_error("encode: sentence has no in-vocabulary tokens");
        result.vector.assign(encoder.output_dim(), 0.0);
        result.empty = true;
        return result;
    }
    result.vector = forward(encoder.tail, pooled.vector, Mode::infer).output;
    return result;
}

// STS-style supervision: scores in [0, 5] over sentence pairs.
struct ScoredSentencePair {
    std::vector<std::string> tokens_a;
    std::vector<std::string> tokens_b;
    double gold_score = 0.0;
};

inline void validate_pair(const ScoredSentencePair& pair) {
    if (pair.tokens_a.empty() || pair.tokens_b.empty())
        throw std::invalid_argument("sentence pair has an empty side");
    if (!(pair.gold_score >= 0.0 && pair.gold_score <= 5.0))
        throw std::invalid_argument("gold score outside [0, 5]");
}

// TSV: score <TAB> sentence_a <TAB> sentence_b, sentences space-tokenized.
inline std::vector<ScoredSentencePair> load_sts_tsv(const std::filesystem::path& path) {
    std::vector<ScoredSentencePair> pairs;
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t1 == std::string_view::npos || t2 == std::string_view::npos)
            throw parse_error(path.string() + ": expected score<TAB>a<TAB>b at line " +
                              std::to_string(ln + 1));
        const auto score = parse_double(line.substr(0, t1));
        if (!score)
            throw parse_error(path.string() + ": non-numeric score at line " +
                              std::to_string(ln + 1));
        ScoredSentencePair pair;
        pair.gold_score = *score;
        for (const auto f : split_ws(line.substr(t1 + 1, t2 - t1 - 1)))
            pair.tokens_a.emplace_back(f);
        for (const auto f : split_ws(line.substr(t2 + 1))) pair.tokens_b.emplace_back(f);
        try {
            validate_pair(pair);
        } catch (const std::invalid_argument& e) {
            throw parse_error(path.string() + ": " + e.what() + " at line " +
                              std::to_string(ln + 1));
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

struct StsTrainResult {
    std::vector<double> loss_trace;  // mean squared error per epoch
    std::size_t pairs_skipped = 0;   // all-OOV on at least one side
};

// Regresses cos(encode(a), encode(b)) onto gold/5. Only tail parameters
// update; the embedding table is read-only throughout (cross-lingual
// transfer depends on the word vectors staying put).
inline StsTrainResult train_sts(DanEncoder& encoder, const EmbeddingTable& table,
                                const std::vector<ScoredSentencePair>& pairs,
                                const TrainSpec& spec) {
    encoder.validate();
    spec.validate();
    if (spec.loss != LossKind::mse_of_cosine)
        throw std::invalid_argument("train_sts: spec.loss must be mse_of_cosine");
    if (pairs.empty()) throw std::invalid_argument("train_sts: empty pair list");

    StsTrainResult result;
    std::vector<std::pair<PooledSentence, PooledSentence>> pooled;
    std::vector<double> targets;
    for (const auto& pair : pairs) {
        validate_pair(pair);
        auto a = pool_tokens(table, pair.tokens_a);
        auto b = pool_tokens(table, pair.tokens_b);
        if (a.found == 0 || b.found == 0) {
            ++result.pairs_skipped;
            continue;
        }
        pooled.emplace_back(std::move(a), std::move(b));
        targets.push_back(pair.gold_score / 5.0);
    }
    if (pooled.empty()) throw std::runtime_error("train_sts: every pair has an all-OOV side");

    std::mt19937_64 rng(spec.seed);
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        shuffle_inplace(order, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
            NetGradients batch = NetGradients::zeros_like(encoder.tail);
            for (std::size_t i = start; i < end; ++i) {
                const auto& [a, b] = pooled[order[i]];
                const auto ca = forward(encoder.tail, a.vector, Mode::train, &rng);
                const auto cb = forward(encoder.tail, b.vector, Mode::train, &rng);
                const auto pg = cosine_mse(ca.output, cb.output, targets[order[i]]);
                epoch_loss += pg.loss;
                batch.add_scaled(backward(encoder.tail, ca, pg.d_a), 1.0);
                batch.add_scaled(backward(encoder.tail, cb, pg.d_b), 1.0);
            }
            const double step = spec.learning_rate / static_cast<double>(end - start);
            for (std::size_t l = 0; l < encoder.tail.layers.size(); ++l) {
                auto& layer = encoder.tail.layers[l];
                for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
                    layer.weights.data[i] -= step * batch.d_weights[l].data[i];
                for (std::size_t i = 0; i < layer.bias.size(); ++i)
                    layer.bias[i] -= step * batch.d_bias[l][i];
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(pooled.size()));
    }
    return result;
}

inline void save_dan_encoder(const DanEncoder& encoder, const std::filesystem::path& basename) {
    nlohmann::json j;
    j["type"] = "dan_encoder";
    j["oov_policy"] = encoder.oov_policy == OovPolicy::skip ? "skip" : "zero_on_empty";
    atomic_write(basename.string() + ".json", j.dump(2) + "\n");
    save_net(encoder.tail, basename.string() + ".tail");
}

inline DanEncoder load_dan_encoder(const std::filesystem::path& basename) {
    const auto j = nlohmann::json::parse(read_file(basename.string() + ".json"));
    if (j.at("type").get<std::string>() != "dan_encoder")
        throw parse_error(basename.string() + ": not a dan_encoder manifest");
    DanEncoder enc;
    enc.oov_policy = j.at("oov_policy").get<std::string>() == "skip" ? OovPolicy::skip
                                                                     : OovPolicy::zero_on_empty;
    enc.tail = load_net(basename.string() + ".tail");
    enc.validate();
    return enc;
}

}  // namespace xling
