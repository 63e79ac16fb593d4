#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/embedding.hpp"
#include "xling/lexicon.hpp"
#include "xling/pca.hpp"

namespace xling {

// d x d map between embedding spaces, row-vector convention: y = x * matrix.
struct LinearMap {
    Matrix matrix;
    std::string source_lang;
    std::string target_lang;
    bool orthogonal = false;
};

enum class Retrieval { cosine, csls };

struct AlignConfig {
    int refinement_iterations = 5;  // 20 for pivot->high-resource in the reference setup
    int csls_k = 10;
    int induction_vocab = 10000;
    Retrieval induction_retrieval = Retrieval::csls;
    std::uint64_t seed = 0;

    void validate() const {
        if (refinement_iterations < 0)
            throw std::invalid_argument("align: refinement_iterations must be >= 0");
        if (csls_k < 1) throw std::invalid_argument("align: csls_k must be >= 1");
        if (induction_vocab < 1) throw std::invalid_argument("align: induction_vocab must be >= 1");
    }
};

namespace detail {

inline Eigen::Map<const EigenRowMajor> eigen_view(const Matrix& m) {
    return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

// Orthogonal Procrustes: W = U V^T from the SVD of X^T Y minimizes
// ||X W - Y||_F over orthogonal W.
inline Matrix procrustes_solve(const Matrix& x, const Matrix& y) {
    const auto xv = eigen_view(x);
    const auto yv = eigen_view(y);
    const Eigen::MatrixXd m = xv.transpose() * yv;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd w = svd.matrixU() * svd.matrixV().transpose();
    Matrix out(x.cols, x.cols);
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j)
            out(i, j) = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

inline Matrix l2_normalized_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto r = out.row(i);
        const double n = std::sqrt(norm2(r));
        if (n > 0.0)
            for (double& v : r) v /= n;
    }
    return out;
}

inline Matrix top_rows(const Matrix& m, std::size_t n) {
    Matrix out(std::min(n, m.rows), m.cols);
    std::copy(m.data.begin(),
              m.data.begin() + static_cast<std::ptrdiff_t>(out.rows * out.cols),
              out.data.begin());
    return out;
}

inline double mean_of_top_k(std::vector<double>& buf, std::size_t k) {
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k) - 1, buf.end(),
                     std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += buf[i];
    return s / static_cast<double>(k);
}

// Mean cosine of each row of `a` to its k nearest rows of `b`; both inputs
// row-normalized. Blocked so the full similarity matrix never materializes.
inline std::vector<double> knn_mean_similarity(const Matrix& a, const Matrix& b, std::size_t k) {
    const auto av = eigen_view(a);
    const auto bv = eigen_view(b);
    std::vector<double> out(a.rows);
    const std::size_t block = 1024;
    std::vector<double> buf;
    for (std::size_t r0 = 0; r0 < a.rows; r0 += block) {
        const std::size_t bs = std::min(block, a.rows - r0);
        const EigenRowMajor sim = av.middleRows(static_cast<Eigen::Index>(r0),
                                                static_cast<Eigen::Index>(bs)) *
                                  bv.transpose();
        for (std::size_t i = 0; i < bs; ++i) {
            buf.assign(sim.row(static_cast<Eigen::Index>(i)).begin(),
                       sim.row(static_cast<Eigen::Index>(i)).end());
            out[r0 + i] = mean_of_top_k(buf, k);
        }
    }
    return out;
}

// Mutual nearest neighbors between row-normalized point sets under CSLS (or
// plain cosine). Ties break toward the lower row index on both sides.
inline std::vector<std::pair<std::size_t, std::size_t>> induce_mutual_nn(
    const Matrix& src_norm, const Matrix& tgt_norm, std::size_t k_csls, Retrieval retrieval) {
    const std::size_t n_s = src_norm.rows, n_t = tgt_norm.rows;
    std::vector<double> r_src(n_s, 0.0), r_tgt(n_t, 0.0);
    if (retrieval == Retrieval::csls) {
        const std::size_t k = std::min({k_csls, n_s, n_t});
        r_src = knn_mean_similarity(src_norm, tgt_norm, k);
        r_tgt = knn_mean_similarity(tgt_norm, src_norm, k);
    }

    std::vector<std::size_t> best_tgt(n_s, 0);
    std::vector<double> best_tgt_score(n_s, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> best_src(n_t, 0);
    std::vector<double> best_src_score(n_t, -std::numeric_limits<double>::infinity());

    const auto sv = eigen_view(src_norm);
    const auto tv = eigen_view(tgt_norm);
    const std::size_t block = 1024;
    for (std::size_t r0 = 0; r0 < n_s; r0 += block) {
        const std::size_t bs = std::min(block, n_s - r0);
        const EigenRowMajor sim = sv.middleRows(static_cast<Eigen::Index>(r0),
                                                static_cast<Eigen::Index>(bs)) *
                                  tv.transpose();
        for (std::size_t i = 0; i < bs; ++i) {
            const std::size_t si = r0 + i;
            for (std::size_t j = 0; j < n_t; ++j) {
                const double score =
                    2.0 * sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                    r_src[si] - r_tgt[j];
                if (score > best_tgt_score[si]) {
                    best_tgt_score[si] = score;
                    best_tgt[si] = j;
                }
                if (score > best_src_score[j]) {
                    best_src_score[j] = score;
                    best_src[j] = si;
                }
            }
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n_s; ++i)
        if (best_src[best_tgt[i]] == i) pairs.emplace_back(i, best_tgt[i]);
    return pairs;
}

}  // namespace detail

struct ProcrustesReport {
    std::size_t pairs_used = 0;
    std::size_t pairs_dropped = 0;
};

inline LinearMap procrustes_fit(const EmbeddingTable& source, const EmbeddingTable& target,
                                const BilingualLexicon& dictionary,
                                ProcrustesReport* report = nullptr) {
    if (source.dim != target.dim) throw std::invalid_argument("procrustes_fit: dim mismatch");
    std::vector<std::size_t> src_rows, tgt_rows;
    std::size_t dropped = 0;
    for (const auto& p : dictionary.pairs) {
        const auto s = source.lookup(p.source);
        const auto t = target.lookup(p.target);
        if (!s || !t) {
            ++dropped;
            continue;
        }
        src_rows.push_back(*s);
        tgt_rows.push_back(*t);
    }
    if (src_rows.size() < source.dim)
        throw std::runtime_error("procrustes_fit: only " + std::to_string(src_rows.size()) +
                                 " resolvable pairs, need at least dim = " +
                                 std::to_string(source.dim));
    Matrix x(src_rows.size(), source.dim), y(tgt_rows.size(), target.dim);
    for (std::size_t i = 0; i < src_rows.size(); ++i) {
        const auto sr = source.row(src_rows[i]);
        const auto tr = target.row(tgt_rows[i]);
        std::copy(sr.begin(), sr.end(), x.row(i).begin());
        std::copy(tr.begin(), tr.end(), y.row(i).begin());
    }
    if (report) {
        report->pairs_used = src_rows.size();
        report->pairs_dropped = dropped;
    }
    return {detail::procrustes_solve(x, y), dictionary.source_lang, dictionary.target_lang, true};
}

struct RefineResult {
    LinearMap map;
    std::vector<std::size_t> induced_sizes;  // one entry per completed iteration
    bool stopped_early = false;
};

// Alternates dictionary induction (mutual CSLS neighbors among the most
// frequent rows) with Procrustes re-fitting. Stops early, keeping the last
// valid map, if an induced dictionary drops below dim.
inline RefineResult refine(const LinearMap& map, const EmbeddingTable& source,
                           const EmbeddingTable& target, const AlignConfig& config) {
    config.validate();
    if (!source.rank_by_frequency || !target.rank_by_frequency)
        throw std::invalid_argument(
            "refine: induction requires frequency-ranked tables on both sides");
    if (source.dim != target.dim || map.matrix.rows != source.dim || map.matrix.cols != source.dim)
        throw std::invalid_argument("refine: dimension mismatch between map and tables");

    RefineResult result{map, {}, false};
    const auto vocab = static_cast<std::size_t>(config.induction_vocab);
    const Matrix src_top = detail::top_rows(source.vectors, vocab);
    const Matrix tgt_top_norm = detail::l2_normalized_rows(detail::top_rows(target.vectors, vocab));

    for (int iter = 0; iter < config.refinement_iterations; ++iter) {
        const auto sv = detail::eigen_view(src_top);
        const auto wv = detail::eigen_view(result.map.matrix);
        Matrix mapped(src_top.rows, src_top.cols);
        Eigen::Map<EigenRowMajor>(mapped.data.data(), static_cast<Eigen::Index>(mapped.rows),
                                  static_cast<Eigen::Index>(mapped.cols)) = sv * wv;
        const Matrix mapped_norm = detail::l2_normalized_rows(mapped);

        const auto induced =
            detail::induce_mutual_nn(mapped_norm, tgt_top_norm,
                                     static_cast<std::size_t>(config.csls_k),
                                     config.induction_retrieval);
        if (induced.size() < source.dim) {
            result.stopped_early = true;
            result.induced_sizes.push_back(induced.size());
            break;
        }
        Matrix x(induced.size(), source.dim), y(induced.size(), target.dim);
        for (std::size_t i = 0; i < induced.size(); ++i) {
            const auto sr = source.row(induced[i].first);
            const auto tr = target.row(induced[i].second);
            std::copy(sr.begin(), sr.end(), x.row(i).begin());
            std::copy(tr.begin(), tr.end(), y.row(i).begin());
        }
        result.map.matrix = detail::procrustes_solve(x, y);
        result.map.orthogonal = true;
        result.induced_sizes.push_back(induced.size());
    }
    return result;
}

struct TranslationEval {
    std::size_t pairs_evaluated = 0;       // resolvable test pairs
    std::size_t pairs_dropped = 0;         // OOV on either side
    std::size_t source_lemmas_evaluated = 0;  // P@k denominators
    std::map<int, double> p_at;
};

// P@k over unique test source lemmas: a lemma scores if any of its gold
// translations appears among the top-k retrieved target tokens.
inline TranslationEval evaluate_translation(const LinearMap& map, const EmbeddingTable& source,
                                            const EmbeddingTable& target,
                                            const BilingualLexicon& test,
                                            const std::vector<int>& k_values, Retrieval retrieval,
                                            int csls_k = 10) {
    if (source.dim != target.dim || map.matrix.rows != source.dim || map.matrix.cols != source.dim)
        throw std::invalid_argument("evaluate_translation: dimension mismatch");
    if (k_values.empty()) throw std::invalid_argument("evaluate_translation: no k values");
    int max_k = 0;
    for (const int k : k_values) {
        if (k < 1) throw std::invalid_argument("evaluate_translation: k must be >= 1");
        max_k = std::max(max_k, k);
    }
    if (static_cast<std::size_t>(max_k) > target.size())
        throw std::invalid_argument("evaluate_translation: k exceeds target vocabulary");

    TranslationEval eval;
    std::unordered_map<std::size_t, std::unordered_set<std::size_t>> gold;  // src row -> tgt rows
    std::vector<std::size_t> lemma_order;
    for (const auto& p : test.pairs) {
        const auto s = source.lookup(p.source);
        const auto t = target.lookup(p.target);
        if (!s || !t) {
            ++eval.pairs_dropped;
            continue;
        }
        auto [it, inserted] = gold.try_emplace(*s);
        if (inserted) lemma_order.push_back(*s);
        it->second.insert(*t);
        ++eval.pairs_evaluated;
    }
    if (gold.empty()) throw std::runtime_error("evaluate_translation: empty resolvable test set");

    const Matrix tgt_norm = detail::l2_normalized_rows(target.vectors);
    std::vector<double> r_tgt(target.size(), 0.0);
    double r_src_query = 0.0;
    Matrix mapped_norm;
    if (retrieval == Retrieval::csls) {
        if (csls_k < 1) throw std::invalid_argument("evaluate_translation: csls_k must be >= 1");
        const auto sv = detail::eigen_view(source.vectors);
        const auto wv = detail::eigen_view(map.matrix);
        Matrix mapped(source.size(), source.dim);
        Eigen::Map<EigenRowMajor>(mapped.data.data(), static_cast<Eigen::Index>(mapped.rows),
                                  static_cast<Eigen::Index>(mapped.cols)) = sv * wv;
        mapped_norm = detail::l2_normalized_rows(mapped);
        const std::size_t k = std::min({static_cast<std::size_t>(csls_k), source.size(),
                                        target.size()});
        r_tgt = detail::knn_mean_similarity(tgt_norm, mapped_norm, k);
    }

    std::map<int, std::size_t> hits;
    for (const int k : k_values) hits[k] = 0;
    std::vector<double> scores(target.size());
    std::vector<double> buf;
    for (const std::size_t src_row : lemma_order) {
        const auto query = apply_row(source.row(src_row), map.matrix);
        const double qn = std::sqrt(norm2(query));
        for (std::size_t j = 0; j < target.size(); ++j) {
            const auto t = tgt_norm.row(j);
            scores[j] = qn > 0.0 ? dot(query, t) / qn : 0.0;
        }
        if (retrieval == Retrieval::csls) {
            const std::size_t k = std::min({static_cast<std::size_t>(csls_k), source.size(),
                                            target.size()});
            buf = scores;
            r_src_query = detail::mean_of_top_k(buf, k);
            for (std::size_t j = 0; j < target.size(); ++j)
                scores[j] = 2.0 * scores[j] - r_src_query - r_tgt[j];
        }
        const auto top = detail::top_k_indices(scores, static_cast<std::size_t>(max_k));
        const auto& truth = gold[src_row];
        for (const int k : k_values) {
            for (std::size_t r = 0; r < static_cast<std::size_t>(k); ++r) {
                if (truth.contains(top[r])) {
                    ++hits[k];
                    break;
                }
            }
        }
    }
    eval.source_lemmas_evaluated = lemma_order.size();
    for (const int k : k_values)
        eval.p_at[k] = static_cast<double>(hits[k]) / static_cast<double>(lemma_order.size());
    return eval;
}

inline LinearMap compose(const LinearMap& first, const LinearMap& second) {
    if (first.target_lang != second.source_lang)
        throw std::invalid_argument("compose: language chain mismatch ('" + first.target_lang +
                                    "' vs '" + second.source_lang + "')");
    if (first.matrix.cols != second.matrix.rows)
        throw std::invalid_argument("compose: dimension mismatch");
    return {matmul(first.matrix, second.matrix), first.source_lang, second.target_lang,
            first.orthogonal && second.orthogonal};
}

// Inverse of an orthogonal map: x * W^T undoes x * W.
inline LinearMap transpose_map(const LinearMap& map) {
    return {transpose(map.matrix), map.target_lang, map.source_lang, map.orthogonal};
}

// Materializes a table in the map's target space. Each row goes through the
// same per-vector transform used at inference, so the two routes agree to the
// last bit.
inline EmbeddingTable map_table(const EmbeddingTable& table, const LinearMap& map) {
    if (table.dim != map.matrix.rows)
        throw std::invalid_argument("map_table: table dim != map input dim");
    Matrix out(table.size(), map.matrix.cols);
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto mapped = apply_row(table.row(i), map.matrix);
        std::copy(mapped.begin(), mapped.end(), out.row(i).begin());
    }
    return make_table(table.tokens, std::move(out),
                      map.target_lang.empty() ? table.language : map.target_lang,
                      table.rank_by_frequency);
}

inline void save_linear_map(const LinearMap& map, const std::filesystem::path& basename) {
    save_matrix_file(basename.string() + ".txt", map.matrix);
    nlohmann::json j;
    j["source_lang"] = map.source_lang;
    j["target_lang"] = map.target_lang;
    j["orthogonal"] = map.orthogonal;
    atomic_write(basename.string() + ".json", j.dump(2) + "\n");
}

inline LinearMap load_linear_map(const std::filesystem::path& basename) {
    LinearMap map;
    map.matrix = load_matrix_file(basename.string() + ".txt");
    const auto j = nlohmann::json::parse(read_file(basename.string() + ".json"));
    map.source_lang = j.at("source_lang").get<std::string>();
    map.target_lang = j.at("target_lang").get<std::string>();
    map.orthogonal = j.at("orthogonal").get<bool>();
    if (map.matrix.rows != map.matrix.cols)
        throw parse_error(basename.string() + ": linear map must be square");
    return map;
}

}  // namespace xling
