#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/sentiment.hpp"
#include "xling/sgns.hpp"
#include "xling/text_io.hpp"

namespace xling {

// Index-aligned sentences across languages: sentence i means the same thing
// in every language.
struct ParallelCorpus {
    std::vector<std::string> languages;
    std::vector<std::vector<std::vector<std::string>>> sentences;  // [language][sentence][token]

    std::size_t language_index(const std::string& lang) const {
        const auto it = std::find(languages.begin(), languages.end(), lang);
        if (it == languages.end())
            throw std::invalid_argument("parallel corpus has no language '" + lang + "'");
        return static_cast<std::size_t>(it - languages.begin());
    }

    std::size_t sentence_count() const { return sentences.empty() ? 0 : sentences[0].size(); }

    void validate() const {
        if (languages.size() != sentences.size())
            throw std::invalid_argument("parallel corpus: one sentence list per language required");
        for (std::size_t l = 1; l < sentences.size(); ++l)
            if (sentences[l].size() != sentences[0].size())
                throw std::invalid_argument("parallel corpus: sentence counts differ between '" +
                                            languages[0] + "' and '" + languages[l] + "'");
    }
};

// Manifest JSON: {"languages": [...], "files": {lang: path}}. Each file is
// one sentence per line, line-aligned across languages.
inline ParallelCorpus load_parallel_corpus(const std::filesystem::path& manifest_path) {
    const auto j = nlohmann::json::parse(read_file(manifest_path));
    ParallelCorpus corpus;
    corpus.languages = j.at("languages").get<std::vector<std::string>>();
    const auto& files = j.at("files");
    const auto base = manifest_path.parent_path();
    for (const auto& lang : corpus.languages) {
        if (!files.contains(lang))
            throw parse_error(manifest_path.string() + ": no file for language '" + lang + "'");
        std::filesystem::path p = files.at(lang).get<std::string>();
        if (p.is_relative()) p = base / p;
        corpus.sentences.push_back(load_corpus(p, lang).sentences);
    }
    corpus.validate();
    return corpus;
}

// Copies sentence-level labels across the alignment: every language receives
// the same (index, label) assignments over its own text.
inline std::map<std::string, std::vector<LabeledSentence>> project_labels(
    const ParallelCorpus& corpus, const std::vector<std::pair<std::size_t, Polarity>>& labels,
    const std::string& source_lang) {
    corpus.validate();
    corpus.language_index(source_lang);  // must exist
    std::map<std::size_t, Polarity> resolved;
    for (const auto& [idx, label] : labels) {
        if (idx >= corpus.sentence_count())
            throw std::out_of_range("project_labels: sentence index " + std::to_string(idx) +
                                    " out of range (corpus has " +
                                    std::to_string(corpus.sentence_count()) + ")");
        const auto [it, inserted] = resolved.emplace(idx, label);
        if (!inserted && it->second != label)
            throw std::invalid_argument("project_labels: conflicting labels for sentence index " +
                                        std::to_string(idx));
    }
    std::map<std::string, std::vector<LabeledSentence>> out;
    for (std::size_t l = 0; l < corpus.languages.size(); ++l) {
        auto& list = out[corpus.languages[l]];
        list.reserve(resolved.size());
        for (const auto& [idx, label] : resolved)
            list.push_back({corpus.sentences[l][idx], label, corpus.languages[l]});
    }
    return out;
}

struct LabelMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    std::array<LabelMetrics, 2> per_label;  // [neg, pos]
    double accuracy = 0.0;
    std::array<std::size_t, 2> support{0, 0};
    // confusion[gold][predicted], label order [neg, pos]
    std::array<std::array<std::size_t, 2>, 2> confusion{{{0, 0}, {0, 0}}};
};

// Per-label precision/recall/F1 plus accuracy, with the 0/0 -> 0 convention.
inline EvalReport evaluate(const std::vector<Polarity>& predictions,
                           const std::vector<Polarity>& gold) {
    if (predictions.size() != gold.size())
        throw std::invalid_argument("evaluate: prediction/gold length mismatch");
    if (predictions.empty()) throw std::invalid_argument("evaluate: empty inputs");

    EvalReport report;
    for (std::size_t i = 0; i < gold.size(); ++i)
        ++report.confusion[polarity_index(gold[i])][polarity_index(predictions[i])];

    std::size_t correct = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        report.support[c] = report.confusion[c][0] + report.confusion[c][1];
        correct += report.confusion[c][c];
        const std::size_t tp = report.confusion[c][c];
        const std::size_t predicted_c = report.confusion[0][c] + report.confusion[1][c];
        auto& m = report.per_label[c];
        m.precision = predicted_c ? static_cast<double>(tp) / static_cast<double>(predicted_c) : 0.0;
        m.recall = report.support[c] ? static_cast<double>(tp) / static_cast<double>(report.support[c])
                                     : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
    return report;
}

// Presentation rounding: two decimals, half away from zero. Raw metrics stay
// at full precision in the JSON output.
inline double round_half_up_2(double v) { return std::floor(v * 100.0 + 0.5) / 100.0; }

inline std::string format_metric(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", round_half_up_2(v));
    return buf;
}

// One line in the shape "neg P R F1, pos P R F1, accuracy A".
inline std::string format_eval_report(const EvalReport& report) {
    std::string out;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& m = report.per_label[c];
        out += c == 0 ? "neg " : ", pos ";
        out += format_metric(m.precision);
        out += ' ';
        out += format_metric(m.recall);
        out += ' ';
        out += format_metric(m.f1);
    }
    out += ", accuracy ";
    out += format_metric(report.accuracy);
    return out;
}

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    for (std::size_t c = 0; c < 2; ++c) {
        const char* name = c == 0 ? "neg" : "pos";
        j["per_label"][name] = {{"precision", report.per_label[c].precision},
                                {"recall", report.per_label[c].recall},
                                {"f1", report.per_label[c].f1},
                                {"support", report.support[c]}};
    }
    j["accuracy"] = report.accuracy;
    j["confusion"] = {{"neg", {{"neg", report.confusion[0][0]}, {"pos", report.confusion[0][1]}}},
                      {"pos", {{"neg", report.confusion[1][0]}, {"pos", report.confusion[1][1]}}}};
    return j;
}

struct LanguageStats {
    std::string language;
    std::size_t tokens = 0;
    std::size_t sentences = 0;
};

inline std::vector<LanguageStats> corpus_stats(const ParallelCorpus& corpus) {
    corpus.validate();
    std::vector<LanguageStats> stats;
    for (std::size_t l = 0; l < corpus.languages.size(); ++l) {
        LanguageStats s;
        s.language = corpus.languages[l];
        s.sentences = corpus.sentences[l].size();
        for (const auto& sent : corpus.sentences[l]) s.tokens += sent.size();
        stats.push_back(std::move(s));
    }
    return stats;
}

}  // namespace xling
