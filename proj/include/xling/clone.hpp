#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "xling/embedding.hpp"
#include "xling/lexicon.hpp"

namespace xling {

struct CloneReport {
    std::size_t pairs_used = 0;
    std::size_t pairs_skipped_oov = 0;
    std::size_t pairs_skipped_multiword = 0;
    std::size_t resulting_vocab = 0;
};

namespace detail {
inline bool has_whitespace(const std::string& s) {
    return s.find_first_of(" \t") != std::string::npos;
}
}  // namespace detail

// Builds a target-language table by copying each pivot lemma's vector onto
// its translations. A target lemma fed by several pivot lemmas gets their
// arithmetic mean. Output rows follow the pivot's row order of first
// contribution, so a frequency-ranked pivot yields a frequency-ranked clone.
inline EmbeddingTable clone_via_lexicon(const EmbeddingTable& pivot,
                                        const BilingualLexicon& lexicon, bool skip_multiword,
                                        CloneReport* report = nullptr) {
    if (lexicon.pairs.empty()) throw std::invalid_argument("clone_via_lexicon: empty lexicon");
    if (!pivot.language.empty() && pivot.language != lexicon.source_lang)
        throw std::invalid_argument("clone_via_lexicon: lexicon source language '" +
                                    lexicon.source_lang + "' != pivot table language '" +
                                    pivot.language + "'");

    CloneReport rep;
    // target lemma -> contributing pivot rows
    std::unordered_map<std::string, std::vector<std::size_t>> contributors;
    for (const auto& p : lexicon.pairs) {
        if (skip_multiword &&
            (detail::has_whitespace(p.source) || detail::has_whitespace(p.target))) {
            ++rep.pairs_skipped_multiword;
            continue;
        }
        const auto row = pivot.lookup(p.source);
        if (!row) {
            ++rep.pairs_skipped_oov;
            continue;
        }
        contributors[p.target].push_back(*row);
        ++rep.pairs_used;
    }

    if (contributors.empty())
        throw std::runtime_error("clone_via_lexicon: no lexicon pair matched the pivot vocabulary");

    // Row order: pivot row of first contribution, then the lemma itself.
    // Deterministic and independent of the lexicon's pair order.
    std::vector<std::string> order;
    order.reserve(contributors.size());
    for (auto& [lemma, rows] : contributors) {
        std::sort(rows.begin(), rows.end());
        order.push_back(lemma);
    }
    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        const std::size_t ra = contributors[a].front(), rb = contributors[b].front();
        if (ra != rb) return ra < rb;
        return a < b;
    });

    Matrix vectors(order.size(), pivot.dim);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& rows = contributors[order[i]];
        auto out = vectors.row(i);
        for (const std::size_t r : rows) {
            const auto vec = pivot.row(r);
            for (std::size_t j = 0; j < pivot.dim; ++j) out[j] += vec[j];
        }
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (std::size_t j = 0; j < pivot.dim; ++j) out[j] *= inv;
    }

    rep.resulting_vocab = order.size();
    if (report) *report = rep;
    return make_table(std::move(order), std::move(vectors), lexicon.target_lang,
                      pivot.rank_by_frequency);
}

}  // namespace xling
