#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "xling/matrix.hpp"
#include "xling/text_io.hpp"

namespace xling {

// Ordered vocabulary plus one dense vector per token. Immutable once built;
// every pipeline stage consumes and produces these.
struct EmbeddingTable {
    std::vector<std::string> tokens;
    Matrix vectors;  // n_tokens x dim
    std::size_t dim = 0;
    // True when row order reflects descending corpus frequency. Embedding
    // dumps are conventionally frequency-sorted; alignment refinement relies
    // on this to pick its induction vocabulary.
    bool rank_by_frequency = true;
    std::string language;

    std::unordered_map<std::string, std::size_t> index;

    std::size_t size() const { return tokens.size(); }

    std::optional<std::size_t> lookup(const std::string& token) const {
        auto it = index.find(token);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }

    std::span<const double> row(std::size_t i) const { return vectors.row(i); }

    void append(const std::string& token, std::span<const double> vec) {
        if (vec.size() != dim) throw std::invalid_argument("append: vector length != dim");
        if (index.contains(token)) throw std::invalid_argument("append: duplicate token " + token);
        for (double v : vec)
            if (!std::isfinite(v)) throw std::invalid_argument("append: non-finite value for " + token);
        index.emplace(token, tokens.size());
        tokens.push_back(token);
        vectors.append_row(vec);
    }

    void rebuild_index() {
        index.clear();
        index.reserve(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!index.emplace(tokens[i], i).second)
                throw std::invalid_argument("duplicate token in table: " + tokens[i]);
        }
    }
};

inline EmbeddingTable make_empty_table(std::size_t dim, std::string language = "") {
    if (dim == 0) throw std::invalid_argument("embedding dim must be positive");
    EmbeddingTable t;
    t.dim = dim;
    t.vectors = Matrix(0, dim);
    t.language = std::move(language);
    return t;
}

inline EmbeddingTable make_table(std::vector<std::string> tokens, Matrix vectors,
                                 std::string language = "", bool rank_by_frequency = true) {
    if (vectors.rows != tokens.size())
        throw std::invalid_argument("make_table: row count != token count");
    if (vectors.cols == 0) throw std::invalid_argument("make_table: dim must be positive");
    for (double v : vectors.data)
        if (!std::isfinite(v)) throw std::invalid_argument("make_table: non-finite entry");
    EmbeddingTable t;
    t.dim = vectors.cols;
    t.tokens = std::move(tokens);
    t.vectors = std::move(vectors);
    t.language = std::move(language);
    t.rank_by_frequency = rank_by_frequency;
    t.rebuild_index();
    return t;
}

struct EmbeddingLoadReport {
    std::size_t declared_count = 0;
    std::size_t actual_count = 0;
    std::size_t duplicates_dropped = 0;
    bool count_mismatch = false;
};

// word2vec text format: header "<count> <dim>", then "token v1 .. v_dim" per
// line. Duplicate tokens keep the first occurrence; a wrong declared count is
// a warning, not an error (actual wins).
inline EmbeddingTable load_embeddings_text(const std::filesystem::path& path,
                                           EmbeddingLoadReport* report = nullptr,
                                           std::string language = "") {
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    if (lines.empty()) throw parse_error(path.string() + ": empty file, expected header");

    const auto header = split_ws(lines[0]);
    if (header.size() != 2)
        throw parse_error(path.string() + ": header must be \"<count> <dim>\" at line 1");
    const auto count = parse_int(header[0]);
    const auto dim = parse_int(header[1]);
    if (!count || !dim || *count < 0 || *dim <= 0)
        throw parse_error(path.string() + ": header must hold non-negative count and positive dim");

    EmbeddingTable table = make_empty_table(static_cast<std::size_t>(*dim), std::move(language));
    EmbeddingLoadReport rep;
    rep.declared_count = static_cast<std::size_t>(*count);

    std::vector<double> vec(table.dim);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        const auto fields = split_ws(lines[ln]);
        if (fields.empty()) continue;  // tolerate blank lines
        if (fields.size() != table.dim + 1)
            throw parse_error(path.string() + ": row has " + std::to_string(fields.size() - 1) +
                              " values, expected dim " + std::to_string(table.dim) + " at line " +
                              std::to_string(ln + 1));
        const std::string token(fields[0]);
        for (std::size_t j = 0; j < table.dim; ++j) {
            const auto v = parse_double(fields[j + 1]);
            if (!v)
                throw parse_error(path.string() + ": non-numeric value at line " +
                                  std::to_string(ln + 1));
            if (!std::isfinite(*v))
                throw parse_error(path.string() + ": non-finite value for token '" + token +
                                  "' at line " + std::to_string(ln + 1));
            vec[j] = *v;
        }
        if (table.index.contains(token)) {
            ++rep.duplicates_dropped;
            continue;
        }
        table.append(token, vec);
    }

    rep.actual_count = table.size();
    rep.count_mismatch = rep.actual_count != rep.declared_count;
    if (report) *report = rep;
    return table;
}

inline void save_embeddings_text(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::string out;
    out.reserve(table.size() * (table.dim * 10 + 16));
    out += std::to_string(table.size());
    out += ' ';
    out += std::to_string(table.dim);
    out += '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
        out += table.tokens[i];
        const auto r = table.row(i);
        for (std::size_t j = 0; j < table.dim; ++j) {
            out += ' ';
            out += format_fixed(r[j], 6);
        }
        out += '\n';
    }
    atomic_write(path, out);
}

enum class NormMode { l2, center_then_l2 };

inline EmbeddingTable normalize(const EmbeddingTable& table, NormMode mode) {
    EmbeddingTable out = table;
    if (mode == NormMode::center_then_l2 && table.size() > 0) {
        std::vector<double> mean(table.dim, 0.0);
        for (std::size_t i = 0; i < out.vectors.rows; ++i) {
            const auto r = out.vectors.row(i);
            for (std::size_t j = 0; j < table.dim; ++j) mean[j] += r[j];
        }
        for (double& m : mean) m /= static_cast<double>(table.size());
        for (std::size_t i = 0; i < out.vectors.rows; ++i) {
            auto r = out.vectors.row(i);
            for (std::size_t j = 0; j < table.dim; ++j) r[j] -= mean[j];
        }
    }
    for (std::size_t i = 0; i < out.vectors.rows; ++i) {
        auto r = out.vectors.row(i);
        const double n = std::sqrt(norm2(r));
        if (n == 0.0)
            throw std::domain_error("normalize: zero-norm row for token '" + table.tokens[i] + "'");
        for (double& v : r) v /= n;
    }
    return out;
}

struct NeighborHit {
    std::string token;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / std::sqrt(na * nb);
}

namespace detail {

// Top-k by score descending, ties broken by ascending row index.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto cmp = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    if (k < idx.size()) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k) - 1, idx.end(), cmp);
        idx.resize(k);
    }
    std::sort(idx.begin(), idx.end(), cmp);
    return idx;
}

inline double mean_top_k(std::vector<double> values, std::size_t k) {
    std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end(),
                      std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += values[i];
    return s / static_cast<double>(k);
}

}  // namespace detail

inline std::vector<NeighborHit> cosine_knn(const EmbeddingTable& table,
                                           std::span<const double> query, std::size_t k) {
    if (query.size() != table.dim) throw std::invalid_argument("cosine_knn: query length != dim");
    if (k == 0) throw std::invalid_argument("cosine_knn: k must be positive");
    if (k > table.size()) throw std::invalid_argument("cosine_knn: k exceeds vocabulary size");
    std::vector<double> scores(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) scores[i] = cosine(query, table.row(i));
    const auto idx = detail::top_k_indices(scores, k);
    std::vector<NeighborHit> hits;
    hits.reserve(k);
    for (std::size_t r = 0; r < idx.size(); ++r)
        hits.push_back({table.tokens[idx[r]], scores[idx[r]], r + 1});
    return hits;
}

// CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y), where r_T(x) is the mean cosine
// of x to its k_csls nearest target rows and r_S(y) the mean cosine of y to
// its k_csls nearest source rows. Penalizes hub vectors that are close to
// everything.
inline std::vector<NeighborHit> csls_knn(const EmbeddingTable& source,
                                         const EmbeddingTable& target,
                                         const std::string& source_token, std::size_t k,
                                         std::size_t k_csls) {
    if (source.dim != target.dim) throw std::invalid_argument("csls_knn: dim mismatch");
    if (k == 0) throw std::invalid_argument("csls_knn: k must be positive");
    if (k > target.size()) throw std::invalid_argument("csls_knn: k exceeds target vocabulary");
    if (k_csls == 0) throw std::invalid_argument("csls_knn: k_csls must be positive");
    if (k_csls > source.size() || k_csls > target.size())
        throw std::invalid_argument("csls_knn: k_csls exceeds table row count");
    const auto row_opt = source.lookup(source_token);
    if (!row_opt) throw std::invalid_argument("csls_knn: unknown token '" + source_token + "'");

    const auto x = source.row(*row_opt);
    std::vector<double> cos_x(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) cos_x[j] = cosine(x, target.row(j));
    const double r_t = detail::mean_top_k(cos_x, k_csls);

    std::vector<double> scores(target.size());
    std::vector<double> cos_y(source.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
        const auto y = target.row(j);
        for (std::size_t i = 0; i < source.size(); ++i) cos_y[i] = cosine(y, source.row(i));
        const double r_s = detail::mean_top_k(cos_y, k_csls);
        scores[j] = 2.0 * cos_x[j] - r_t - r_s;
    }

    const auto idx = detail::top_k_indices(scores, k);
    std::vector<NeighborHit> hits;
    hits.reserve(k);
    for (std::size_t r = 0; r < idx.size(); ++r)
        hits.push_back({target.tokens[idx[r]], scores[idx[r]], r + 1});
    return hits;
}

}  // namespace xling
