#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "xling/rng.hpp"
#include "xling/text_io.hpp"

namespace xling {

enum class Provenance { base, predicted };

struct LexiconPair {
    std::string source;
    std::string target;
    Provenance provenance = Provenance::base;
};

// Directed translation lexicon. A source lemma may map to several targets and
// vice versa; (source, target) pairs are unique.
struct BilingualLexicon {
    std::string source_lang;
    std::string target_lang;
    std::vector<LexiconPair> pairs;

    std::size_t size() const { return pairs.size(); }
};

struct LexiconLoadReport {
    std::size_t duplicates_dropped = 0;
    bool empty_file = false;
};

enum class LexiconFormat { tsv, xml };

namespace detail {

inline std::string pair_key(std::string_view s, std::string_view t) {
    std::string k;
    k.reserve(s.size() + t.size() + 1);
    k.append(s);
    k.push_back('\t');
    k.append(t);
    return k;
}

// Minimal XML subset: a single root, <e> entries holding one <l> lemma and
// one or more <t> translations anywhere inside the entry; attributes,
// comments, processing instructions and unknown elements are ignored. This
// covers GiellaLT-style dictionaries after flattening.
struct MiniXmlParser {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line = 1;
    const std::string& file;

    explicit MiniXmlParser(std::string_view t, const std::string& f) : text(t), file(f) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw parse_error(file + ": " + msg + " at line " + std::to_string(line));
    }

    void advance(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            if (text[pos + i] == '\n') ++line;
        pos += n;
    }

    bool starts_with(std::string_view s) const { return text.substr(pos, s.size()) == s; }

    void skip_until(std::string_view s, const std::string& what) {
        const std::size_t found = text.find(s, pos);
        if (found == std::string_view::npos) fail("unterminated " + what);
        advance(found - pos + s.size());
    }

    static std::string decode_entities(std::string_view s) {
        std::string out;
        out.reserve(s.size());
        for (std::size_t i = 0; i < s.size();) {
            if (s[i] != '&') {
                out += s[i++];
                continue;
            }
            const auto end = s.find(';', i);
            const std::string_view ent = end == std::string_view::npos
                                             ? std::string_view{}
                                             : s.substr(i + 1, end - i - 1);
            if (ent == "amp") out += '&';
            else if (ent == "lt") out += '<';
            else if (ent == "gt") out += '>';
            else if (ent == "quot") out += '"';
            else if (ent == "apos") out += '\'';
            else {
                out += '&';
                ++i;
                continue;
            }
            i = end + 1;
        }
        return out;
    }

    struct Tag {
        std::string name;
        bool closing = false;
        bool self_closing = false;
    };

    // pos sits on '<'. Consumes the tag, returns nullopt for comments/PIs.
    std::optional<Tag> read_tag() {
        if (starts_with("<!--")) {
            skip_until("-->", "comment");
            return std::nullopt;
        }
        if (starts_with("<?")) {
            skip_until("?>", "processing instruction");
            return std::nullopt;
        }
        if (starts_with("<!")) {
            skip_until(">", "declaration");
            return std::nullopt;
        }
        Tag tag;
        advance(1);
        if (pos < text.size() && text[pos] == '/') {
            tag.closing = true;
            advance(1);
        }
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != '>' && text[pos] != '/' &&
               !std::isspace(static_cast<unsigned char>(text[pos])))
            advance(1);
        tag.name = std::string(text.substr(start, pos - start));
        if (tag.name.empty()) fail("empty tag name");
        // skip attributes
        while (pos < text.size() && text[pos] != '>') {
            if (text[pos] == '/' && pos + 1 < text.size() && text[pos + 1] == '>') {
                tag.self_closing = true;
                advance(1);
            } else if (text[pos] == '"' || text[pos] == '\'') {
                const char q = text[pos];
                advance(1);
                while (pos < text.size() && text[pos] != q) advance(1);
                if (pos >= text.size()) fail("unterminated attribute value");
                advance(1);
            } else {
                advance(1);
            }
        }
        if (pos >= text.size()) fail("unterminated tag <" + tag.name + ">");
        advance(1);  // '>'
        return tag;
    }

    // Text content until the next '<'.
    std::string_view read_text() {
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != '<') advance(1);
        return text.substr(start, pos - start);
    }
};

}  // namespace detail

inline BilingualLexicon load_lexicon_tsv(const std::filesystem::path& path,
                                         std::string source_lang, std::string target_lang,
                                         Provenance provenance = Provenance::base,
                                         LexiconLoadReport* report = nullptr) {
    const std::string text = read_file(path);
    BilingualLexicon lex{std::move(source_lang), std::move(target_lang), {}};
    LexiconLoadReport rep;
    std::unordered_set<std::string> seen;

    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos)
            throw parse_error(path.string() + ": expected exactly one tab at line " +
                              std::to_string(ln + 1));
        const std::string src(trim(line.substr(0, tab)));
        const std::string tgt(trim(line.substr(tab + 1)));
        if (src.empty() || tgt.empty())
            throw parse_error(path.string() + ": empty lemma at line " + std::to_string(ln + 1));
        if (!seen.insert(detail::pair_key(src, tgt)).second) {
            ++rep.duplicates_dropped;
            continue;
        }
        lex.pairs.push_back({src, tgt, provenance});
    }
    rep.empty_file = lex.pairs.empty();
    if (report) *report = rep;
    return lex;
}

inline BilingualLexicon load_lexicon_xml(const std::filesystem::path& path,
                                         std::string source_lang, std::string target_lang,
                                         Provenance provenance = Provenance::base,
                                         LexiconLoadReport* report = nullptr) {
    const std::string text = read_file(path);
    BilingualLexicon lex{std::move(source_lang), std::move(target_lang), {}};
    LexiconLoadReport rep;
    std::unordered_set<std::string> seen;

    detail::MiniXmlParser p(text, path.string());
    std::vector<std::string> stack;
    std::size_t entry_depth = 0;  // depth of the innermost open <e>, 0 = none
    std::string lemma;
    std::vector<std::string> translations;
    std::string pending_text;
    std::size_t entry_line = 0;

    const auto flush_entry = [&]() {
        if (lemma.empty())
            throw parse_error(path.string() + ": entry without <l> lemma at line " +
                              std::to_string(entry_line));
        if (translations.empty())
            throw parse_error(path.string() + ": entry without <t> translation at line " +
                              std::to_string(entry_line));
        for (const auto& t : translations) {
            if (!seen.insert(detail::pair_key(lemma, t)).second) {
                ++rep.duplicates_dropped;
                continue;
            }
            lex.pairs.push_back({lemma, t, provenance});
        }
        lemma.clear();
        translations.clear();
    };

    while (p.pos < p.text.size()) {
        if (p.text[p.pos] != '<') {
            pending_text = std::string(trim(p.read_text()));
            continue;
        }
        const auto tag = p.read_tag();
        if (!tag) continue;
        if (tag->closing) {
            if (stack.empty() || stack.back() != tag->name)
                p.fail("mismatched closing tag </" + tag->name + ">");
            if (entry_depth > 0) {
                if (tag->name == "l" && lemma.empty())
                    lemma = detail::MiniXmlParser::decode_entities(trim(pending_text));
                else if (tag->name == "t")
                    translations.push_back(
                        detail::MiniXmlParser::decode_entities(trim(pending_text)));
                if (tag->name == "e" && stack.size() == entry_depth) {
                    flush_entry();
                    entry_depth = 0;
                }
            }
            stack.pop_back();
            pending_text.clear();
            continue;
        }
        if (tag->name == "e" && tag->self_closing)
            p.fail("entry without <l> lemma");
        if (!tag->self_closing) stack.push_back(tag->name);
        if (tag->name == "e" && entry_depth == 0 && !tag->self_closing) {
            entry_depth = stack.size();
            entry_line = p.line;
        }
        pending_text.clear();
    }
    if (!stack.empty()) p.fail("unclosed element <" + stack.back() + ">");

    rep.empty_file = lex.pairs.empty();
    if (report) *report = rep;
    return lex;
}

inline BilingualLexicon load_lexicon(const std::filesystem::path& path, LexiconFormat format,
                                     std::string source_lang, std::string target_lang,
                                     Provenance provenance = Provenance::base,
                                     LexiconLoadReport* report = nullptr) {
    return format == LexiconFormat::tsv
               ? load_lexicon_tsv(path, std::move(source_lang), std::move(target_lang), provenance,
                                  report)
               : load_lexicon_xml(path, std::move(source_lang), std::move(target_lang), provenance,
                                  report);
}

struct MergeReport {
    std::size_t base_count = 0;
    std::size_t predicted_count = 0;
    std::size_t total = 0;
};

// Union of base and predicted pairs. On overlap, provenance base wins.
inline BilingualLexicon merge(const BilingualLexicon& base, const BilingualLexicon& predicted,
                              MergeReport* report = nullptr) {
    if (base.source_lang != predicted.source_lang || base.target_lang != predicted.target_lang)
        throw std::invalid_argument("merge: language pair mismatch (" + base.source_lang + "->" +
                                    base.target_lang + " vs " + predicted.source_lang + "->" +
                                    predicted.target_lang + ")");
    BilingualLexicon out{base.source_lang, base.target_lang, {}};
    std::unordered_set<std::string> seen;
    for (const auto& p : base.pairs) {
        if (seen.insert(detail::pair_key(p.source, p.target)).second)
            out.pairs.push_back({p.source, p.target, Provenance::base});
    }
    const std::size_t base_count = out.pairs.size();
    for (const auto& p : predicted.pairs) {
        if (seen.insert(detail::pair_key(p.source, p.target)).second)
            out.pairs.push_back({p.source, p.target, Provenance::predicted});
    }
    if (report) {
        report->base_count = base_count;
        report->predicted_count = out.pairs.size() - base_count;
        report->total = out.pairs.size();
    }
    return out;
}

struct LexiconSplit {
    BilingualLexicon train;
    BilingualLexicon test;
};

// Splits by unique source lemma, never by pair: all translations of a lemma
// land on the same side, so test lemmas are unseen during supervision.
inline LexiconSplit split_train_test(const BilingualLexicon& lexicon, double test_fraction,
                                     std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_train_test: test_fraction must lie in (0,1)");
    std::vector<std::string> lemmas;
    std::unordered_set<std::string> seen;
    for (const auto& p : lexicon.pairs)
        if (seen.insert(p.source).second) lemmas.push_back(p.source);
    if (lemmas.size() < 2)
        throw std::invalid_argument("split_train_test: need at least 2 source lemmas");

    std::mt19937_64 rng(seed);
    shuffle_inplace(lemmas, rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(lemmas.size())));
    std::unordered_set<std::string> test_lemmas(lemmas.begin(),
                                                lemmas.begin() + static_cast<std::ptrdiff_t>(n_test));

    LexiconSplit split;
    split.train.source_lang = split.test.source_lang = lexicon.source_lang;
    split.train.target_lang = split.test.target_lang = lexicon.target_lang;
    for (const auto& p : lexicon.pairs)
        (test_lemmas.contains(p.source) ? split.test : split.train).pairs.push_back(p);
    return split;
}

// Replaces tokens equal (ASCII case-insensitively) to a `from` entry with its
// `to` replacement. Whole-token matches only. Default covers the stopword
// gap for "no"/"not" in lemmatized English embeddings.
inline std::vector<std::pair<std::string, std::string>> default_negation_remap() {
    return {{"no", "nt"}, {"not", "nt"}};
}

inline std::vector<std::string> apply_negation_remap(
    const std::vector<std::string>& tokens,
    const std::vector<std::pair<std::string, std::string>>& remap = default_negation_remap()) {
    const auto fold = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    std::unordered_map<std::string, std::string> table;
    for (const auto& [from, to] : remap) table.emplace(fold(from), to);
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        auto it = table.find(fold(tok));
        out.push_back(it == table.end() ? tok : it->second);
    }
    return out;
}

inline void save_lexicon_tsv(const BilingualLexicon& lexicon, const std::filesystem::path& path) {
    std::string out;
    for (const auto& p : lexicon.pairs) {
        out += p.source;
        out += '\t';
        out += p.target;
        out += '\n';
    }
    atomic_write(path, out);
}

}  // namespace xling
