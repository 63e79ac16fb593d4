#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/align.hpp"
#include "xling/clone.hpp"
#include "xling/corpus_eval.hpp"
#include "xling/dan.hpp"
#include "xling/embedding.hpp"
#include "xling/lexicon.hpp"
#include "xling/pca.hpp"
#include "xling/sentiment.hpp"
#include "xling/sgns.hpp"
#include "xling/text_io.hpp"

namespace xling {

// Exit codes: 2 missing inputs, 3 validation failure, 4 numeric/runtime
// failure. main() maps exception types onto these.
struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct StageContext {
    fs::path config_dir;
    fs::path out_dir;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> negation_remap = default_negation_remap();
    std::ostream* log = &std::cerr;
};

// Collected while a stage runs; becomes the run manifest.
struct StageIO {
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
};

inline std::string get_string(const json& entry, const std::string& key,
                              const std::string& stage_id) {
    if (!entry.contains(key) || !entry.at(key).is_string())
        throw ConfigError("stage '" + stage_id + "': missing string field '" + key + "'");
    return entry.at(key).get<std::string>();
}

inline std::string get_string_or(const json& entry, const std::string& key,
                                 const std::string& fallback) {
    if (!entry.contains(key)) return fallback;
    return entry.at(key).get<std::string>();
}

template <typename T>
T get_or(const json& entry, const std::string& key, T fallback) {
    if (!entry.contains(key) || entry.at(key).is_null()) return fallback;
    return entry.at(key).get<T>();
}

inline LexiconFormat lexicon_format_from(const std::string& name, const std::string& stage_id) {
    if (name == "tsv") return LexiconFormat::tsv;
    if (name == "xml") return LexiconFormat::xml;
    throw ConfigError("stage '" + stage_id + "': lexicon format must be tsv or xml, got '" +
                      name + "'");
}

inline Retrieval retrieval_from(const std::string& name, const std::string& stage_id) {
    if (name == "cosine") return Retrieval::cosine;
    if (name == "csls") return Retrieval::csls;
    throw ConfigError("stage '" + stage_id + "': retrieval must be cosine or csls, got '" + name +
                      "'");
}

// Inputs may be artifacts of earlier stages (under out_dir) or external files
// (relative to the config file). Artifacts win when both exist.
inline fs::path resolve_input(const StageContext& ctx, const std::string& name,
                              const std::string& stage_id) {
    const fs::path p(name);
    if (p.is_absolute()) {
        if (fs::exists(p)) return p;
        throw MissingInputError("stage '" + stage_id + "': missing input " + p.string());
    }
    const fs::path artifact = ctx.out_dir / p;
    if (fs::exists(artifact)) return artifact;
    const fs::path external = ctx.config_dir / p;
    if (fs::exists(external)) return external;
    throw MissingInputError("stage '" + stage_id + "': missing input '" + name +
                            "' (looked in " + artifact.string() + " and " + external.string() +
                            ")");
}

// Multi-file artifacts are addressed by basename; resolution checks the
// manifest-bearing .json file, then returns the basename itself.
inline fs::path resolve_input_basename(const StageContext& ctx, const std::string& name,
                                       const std::string& stage_id) {
    const fs::path probe = resolve_input(ctx, name + ".json", stage_id);
    fs::path base = probe;
    base.replace_extension();
    return base;
}

inline fs::path output_path(const StageContext& ctx, const std::string& name) {
    const fs::path p(name);
    return p.is_absolute() ? p : ctx.out_dir / p;
}

inline std::vector<fs::path> linear_map_files(const fs::path& base) {
    return {base.string() + ".txt", base.string() + ".json"};
}

inline std::vector<fs::path> pca_model_files(const fs::path& base) {
    return {base.string() + ".txt", base.string() + ".json"};
}

inline std::vector<fs::path> net_files(const fs::path& base) {
    return {base.string() + ".json", base.string() + ".params.txt"};
}

inline std::vector<fs::path> encoder_files(const fs::path& base) {
    auto files = net_files(base.string() + ".tail");
    files.insert(files.begin(), base.string() + ".json");
    return files;
}

inline std::vector<fs::path> sentiment_model_files(const fs::path& base) {
    auto files = net_files(base.string() + ".classifier");
    files.insert(files.begin(), base.string() + ".json");
    return files;
}

inline void append(std::vector<fs::path>& dst, const std::vector<fs::path>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

// ---------------------------------------------------------------------------
// Stage implementations
// ---------------------------------------------------------------------------

inline void stage_convert(const StageContext& ctx, const json& entry, const std::string& id,
                          StageIO& io) {
    const std::string source_lang = get_string(entry, "source_lang", id);
    const std::string target_lang = get_string(entry, "target_lang", id);
    const fs::path base_path = resolve_input(ctx, get_string(entry, "base", id), id);
    io.inputs.push_back(base_path);

    LexiconLoadReport base_report;
    BilingualLexicon base_lex =
        load_lexicon(base_path, lexicon_format_from(get_string_or(entry, "base_format", "tsv"), id),
                     source_lang, target_lang, Provenance::base, &base_report);

    MergeReport merge_report;
    merge_report.base_count = base_lex.size();
    merge_report.total = base_lex.size();
    BilingualLexicon merged = std::move(base_lex);
    if (entry.contains("predicted") && !entry.at("predicted").is_null()) {
        const fs::path pred_path = resolve_input(ctx, get_string(entry, "predicted", id), id);
        io.inputs.push_back(pred_path);
        const BilingualLexicon predicted = load_lexicon(
            pred_path, lexicon_format_from(get_string_or(entry, "predicted_format", "tsv"), id),
            source_lang, target_lang, Provenance::predicted);
        merged = merge(merged, predicted, &merge_report);
    }

    const double test_fraction = get_or<double>(entry, "test_fraction", 0.2);
    auto split = split_train_test(merged, test_fraction, ctx.seed);

    // Extra supervision pairs injected into the train side only (e.g. the
    // "not" -> "nt" bridge for stopword-stripped embeddings).
    std::size_t appended = 0;
    if (entry.contains("append_pairs")) {
        for (const auto& item : entry.at("append_pairs")) {
            if (!item.is_array() || item.size() != 2)
                throw ConfigError("stage '" + id + "': append_pairs entries must be [source, target]");
            const std::string s = item.at(0).get<std::string>();
            const std::string t = item.at(1).get<std::string>();
            const bool dup = std::any_of(
                split.train.pairs.begin(), split.train.pairs.end(),
                [&](const LexiconPair& p) { return p.source == s && p.target == t; });
            if (!dup) {
                split.train.pairs.push_back({s, t, Provenance::base});
                ++appended;
            }
        }
    }

    const fs::path train_out = output_path(ctx, get_string(entry, "train_out", id));
    const fs::path test_out = output_path(ctx, get_string(entry, "test_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_lexicon_tsv(split.train, train_out);
    save_lexicon_tsv(split.test, test_out);

    json report;
    report["base"] = merge_report.base_count;
    report["predicted"] = merge_report.predicted_count;
    report["total"] = merge_report.total;
    report["duplicates_dropped_on_load"] = base_report.duplicates_dropped;
    report["train_pairs"] = split.train.size();
    report["test_pairs"] = split.test.size();
    report["appended_train_pairs"] = appended;
    report["seed"] = ctx.seed;
    atomic_write(report_out, report.dump(2) + "\n");
    io.outputs = {train_out, test_out, report_out};
}

inline void stage_pca(const StageContext& ctx, const json& entry, const std::string& id,
                      StageIO& io) {
    const fs::path input = resolve_input(ctx, get_string(entry, "input", id), id);
    io.inputs.push_back(input);
    if (!entry.contains("target_dim"))
        throw ConfigError("stage '" + id + "': missing field 'target_dim'");
    const auto target_dim = entry.at("target_dim").get<std::size_t>();

    const EmbeddingTable table =
        load_embeddings_text(input, nullptr, get_string_or(entry, "language", ""));
    const PcaModel model = pca_fit(table, target_dim);
    const EmbeddingTable reduced = pca_apply(model, table);

    const fs::path table_out = output_path(ctx, get_string(entry, "table_out", id));
    save_embeddings_text(reduced, table_out);
    io.outputs.push_back(table_out);
    if (entry.contains("model_out")) {
        const fs::path model_out = output_path(ctx, get_string(entry, "model_out", id));
        save_pca_model(model, model_out);
        append(io.outputs, pca_model_files(model_out));
    }
}

inline void stage_clone(const StageContext& ctx, const json& entry, const std::string& id,
                        StageIO& io) {
    const fs::path pivot_path = resolve_input(ctx, get_string(entry, "pivot_table", id), id);
    const fs::path lexicon_path = resolve_input(ctx, get_string(entry, "lexicon", id), id);
    io.inputs = {pivot_path, lexicon_path};

    const EmbeddingTable pivot =
        load_embeddings_text(pivot_path, nullptr, get_string_or(entry, "pivot_lang", ""));
    BilingualLexicon lexicon = load_lexicon(
        lexicon_path, lexicon_format_from(get_string_or(entry, "lexicon_format", "tsv"), id),
        get_string(entry, "lexicon_source_lang", id), get_string(entry, "lexicon_target_lang", id));
    if (get_or<bool>(entry, "invert", false)) {
        BilingualLexicon inverted{lexicon.target_lang, lexicon.source_lang, {}};
        for (const auto& p : lexicon.pairs)
            inverted.pairs.push_back({p.target, p.source, p.provenance});
        lexicon = std::move(inverted);
    }

    CloneReport report;
    const EmbeddingTable cloned =
        clone_via_lexicon(pivot, lexicon, get_or<bool>(entry, "skip_multiword", true), &report);

    const fs::path table_out = output_path(ctx, get_string(entry, "table_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_embeddings_text(cloned, table_out);
    json j;
    j["pairs_used"] = report.pairs_used;
    j["pairs_skipped_oov"] = report.pairs_skipped_oov;
    j["pairs_skipped_multiword"] = report.pairs_skipped_multiword;
    j["resulting_vocab"] = report.resulting_vocab;
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = {table_out, report_out};
}

inline void stage_finetune(const StageContext& ctx, const json& entry, const std::string& id,
                           StageIO& io) {
    const fs::path table_path = resolve_input(ctx, get_string(entry, "table", id), id);
    const fs::path corpus_path = resolve_input(ctx, get_string(entry, "corpus", id), id);
    io.inputs = {table_path, corpus_path};

    const EmbeddingTable table =
        load_embeddings_text(table_path, nullptr, get_string_or(entry, "language", ""));
    const Corpus corpus = load_corpus(corpus_path, get_string_or(entry, "language", ""));

    SgnsConfig config;
    config.window = get_or<int>(entry, "window", config.window);
    config.min_count = get_or<int>(entry, "min_count", config.min_count);
    config.negatives = get_or<int>(entry, "negatives", config.negatives);
    config.epochs = get_or<int>(entry, "epochs", config.epochs);
    config.initial_lr = get_or<double>(entry, "initial_lr", config.initial_lr);
    config.final_lr = get_or<double>(entry, "final_lr", config.final_lr);
    config.seed = ctx.seed;
    if (entry.contains("subsample_threshold") && !entry.at("subsample_threshold").is_null())
        config.subsample_threshold = entry.at("subsample_threshold").get<double>();
    config.validate();

    ExpandReport expand_report;
    const EmbeddingTable expanded =
        expand_vocabulary(table, corpus, config.min_count, config.seed, &expand_report);
    const SgnsResult trained = finetune_sgns(expanded, corpus, config);

    const fs::path table_out = output_path(ctx, get_string(entry, "table_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_embeddings_text(trained.table, table_out);
    json j;
    j["kept"] = expand_report.kept;
    j["added"] = expand_report.added;
    j["rejected"] = expand_report.rejected_below_min_count;
    j["epochs"] = config.epochs;
    j["final_loss"] = trained.loss_trace.empty() ? json(nullptr) : json(trained.loss_trace.back());
    j["loss_trace"] = trained.loss_trace;
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = {table_out, report_out};
}

inline void stage_align(const StageContext& ctx, const json& entry, const std::string& id,
                        StageIO& io) {
    const fs::path source_path = resolve_input(ctx, get_string(entry, "source_table", id), id);
    const fs::path target_path = resolve_input(ctx, get_string(entry, "target_table", id), id);
    const fs::path lexicon_path = resolve_input(ctx, get_string(entry, "lexicon", id), id);
    io.inputs = {source_path, target_path, lexicon_path};

    const std::string source_lang = get_string(entry, "source_lang", id);
    const std::string target_lang = get_string(entry, "target_lang", id);
    EmbeddingTable source = load_embeddings_text(source_path, nullptr, source_lang);
    EmbeddingTable target = load_embeddings_text(target_path, nullptr, target_lang);
    // Rows are length-normalized before fitting by default; cosine retrieval
    // is scale-invariant, so this only shapes the least-squares weighting.
    if (get_or<bool>(entry, "normalize", true)) {
        source = normalize(source, NormMode::l2);
        target = normalize(target, NormMode::l2);
    }
    const BilingualLexicon lexicon = load_lexicon(
        lexicon_path, lexicon_format_from(get_string_or(entry, "lexicon_format", "tsv"), id),
        source_lang, target_lang);

    AlignConfig config;
    config.refinement_iterations =
        get_or<int>(entry, "refinement_iterations", config.refinement_iterations);
    config.csls_k = get_or<int>(entry, "csls_k", config.csls_k);
    config.induction_vocab = get_or<int>(entry, "induction_vocab", config.induction_vocab);
    config.induction_retrieval = retrieval_from(get_string_or(entry, "retrieval", "csls"), id);
    config.seed = ctx.seed;
    config.validate();

    ProcrustesReport fit_report;
    const LinearMap initial = procrustes_fit(source, target, lexicon, &fit_report);
    const RefineResult refined = refine(initial, source, target, config);

    const fs::path map_out = output_path(ctx, get_string(entry, "map_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_linear_map(refined.map, map_out);
    json j;
    j["pairs_used"] = fit_report.pairs_used;
    j["pairs_dropped"] = fit_report.pairs_dropped;
    j["refinement_iterations"] = config.refinement_iterations;
    j["induced_sizes"] = refined.induced_sizes;
    j["stopped_early"] = refined.stopped_early;
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = linear_map_files(map_out);
    io.outputs.push_back(report_out);
}

inline void stage_eval_align(const StageContext& ctx, const json& entry, const std::string& id,
                             StageIO& io) {
    const fs::path map_base = resolve_input_basename(ctx, get_string(entry, "map", id), id);
    const fs::path source_path = resolve_input(ctx, get_string(entry, "source_table", id), id);
    const fs::path target_path = resolve_input(ctx, get_string(entry, "target_table", id), id);
    const fs::path lexicon_path = resolve_input(ctx, get_string(entry, "lexicon", id), id);
    io.inputs = linear_map_files(map_base);
    io.inputs.push_back(source_path);
    io.inputs.push_back(target_path);
    io.inputs.push_back(lexicon_path);

    const LinearMap map = load_linear_map(map_base);
    const EmbeddingTable source = load_embeddings_text(source_path, nullptr, map.source_lang);
    const EmbeddingTable target = load_embeddings_text(target_path, nullptr, map.target_lang);
    const BilingualLexicon test = load_lexicon(
        lexicon_path, lexicon_format_from(get_string_or(entry, "lexicon_format", "tsv"), id),
        map.source_lang, map.target_lang);

    const auto k_values = get_or<std::vector<int>>(entry, "k_values", {1, 5, 10});
    const Retrieval retrieval = retrieval_from(get_string_or(entry, "retrieval", "csls"), id);
    const int csls_k = get_or<int>(entry, "csls_k", 10);
    const TranslationEval eval =
        evaluate_translation(map, source, target, test, k_values, retrieval, csls_k);

    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    json j;
    j["pairs_evaluated"] = eval.pairs_evaluated;
    j["pairs_dropped"] = eval.pairs_dropped;
    j["source_lemmas_evaluated"] = eval.source_lemmas_evaluated;
    for (const auto& [k, v] : eval.p_at) j["p_at"][std::to_string(k)] = v;
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = {report_out};
}

inline void stage_train_encoder(const StageContext& ctx, const json& entry, const std::string& id,
                                StageIO& io) {
    const fs::path table_path = resolve_input(ctx, get_string(entry, "table", id), id);
    const fs::path sts_path = resolve_input(ctx, get_string(entry, "sts", id), id);
    io.inputs = {table_path, sts_path};

    const EmbeddingTable table =
        load_embeddings_text(table_path, nullptr, get_string_or(entry, "language", ""));
    auto pairs = load_sts_tsv(sts_path);
    if (get_or<bool>(entry, "negation_remap", true)) {
        for (auto& pair : pairs) {
            pair.tokens_a = apply_negation_remap(pair.tokens_a, ctx.negation_remap);
            pair.tokens_b = apply_negation_remap(pair.tokens_b, ctx.negation_remap);
        }
    }

    DanEncoder encoder;
    if (get_or<bool>(entry, "identity_init", false)) {
        encoder = make_identity_tail_encoder(table.dim);
    } else {
        std::mt19937_64 rng(ctx.seed);
        encoder = make_dan_encoder(
            table.dim, rng,
            activation_from_name(get_string_or(entry, "activation", "tanh")));
    }

    TrainSpec spec;
    spec.loss = LossKind::mse_of_cosine;
    spec.epochs = get_or<int>(entry, "epochs", 10);
    spec.batch_size = get_or<int>(entry, "batch_size", 32);
    spec.learning_rate = get_or<double>(entry, "learning_rate", 0.01);
    spec.seed = ctx.seed;
    const StsTrainResult result = train_sts(encoder, table, pairs, spec);

    const fs::path encoder_out = output_path(ctx, get_string(entry, "encoder_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_dan_encoder(encoder, encoder_out);
    json j;
    j["pairs"] = pairs.size();
    j["pairs_skipped"] = result.pairs_skipped;
    j["epochs"] = spec.epochs;
    j["loss_trace"] = result.loss_trace;
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = encoder_files(encoder_out);
    io.outputs.push_back(report_out);
}

inline void stage_train_classifier(const StageContext& ctx, const json& entry,
                                   const std::string& id, StageIO& io) {
    const fs::path encoder_base = resolve_input_basename(ctx, get_string(entry, "encoder", id), id);
    const fs::path table_path = resolve_input(ctx, get_string(entry, "table", id), id);
    io.inputs = encoder_files(encoder_base);
    io.inputs.push_back(table_path);

    const DanEncoder encoder = load_dan_encoder(encoder_base);
    const EmbeddingTable table =
        load_embeddings_text(table_path, nullptr, get_string_or(entry, "language", ""));

    std::vector<std::vector<LabeledSentence>> sources;
    if (!entry.contains("train"))
        throw ConfigError("stage '" + id + "': missing field 'train'");
    const auto load_source = [&](const fs::path& path, const std::string& format) {
        io.inputs.push_back(path);
        if (format == "labels") return load_labeled_tsv(path);
        if (format == "stars") return load_star_ratings_tsv(path);
        throw ConfigError("stage '" + id + "': train format must be labels or stars");
    };
    if (entry.at("train").is_string()) {
        sources.push_back(load_source(resolve_input(ctx, entry.at("train").get<std::string>(), id),
                                      "labels"));
    } else {
        for (const auto& item : entry.at("train")) {
            const fs::path path = resolve_input(ctx, item.at("path").get<std::string>(), id);
            sources.push_back(load_source(path, item.value("format", "labels")));
        }
    }
    auto data = concat_shuffle(sources, ctx.seed);
    if (get_or<bool>(entry, "negation_remap", true))
        for (auto& s : data) s.tokens = apply_negation_remap(s.tokens, ctx.negation_remap);

    TrainSpec spec;
    spec.loss = LossKind::softmax_cross_entropy;
    spec.epochs = get_or<int>(entry, "epochs", 3);
    spec.batch_size = get_or<int>(entry, "batch_size", 32);
    spec.learning_rate = get_or<double>(entry, "learning_rate", 0.01);
    spec.seed = ctx.seed;

    ClassifierOptions options;
    options.hidden_dim = get_or<std::size_t>(entry, "hidden", 300);
    options.dropout_rate = get_or<double>(entry, "dropout", 0.5);
    options.encoder_ref = get_string(entry, "encoder", id);
    const ClassifierTrainResult result = train_classifier(encoder, table, data, spec, options);

    const fs::path model_out = output_path(ctx, get_string(entry, "model_out", id));
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    save_sentiment_model(result.model, model_out);
    json j;
    j["sentences"] = data.size();
    j["empty_encodings"] = result.empty_encodings;
    j["epochs"] = spec.epochs;
    j["loss_trace"] = result.loss_trace;
    j["train_accuracy"] = result.train_accuracy;
    j["parameters"] = count_params(result.model.classifier);
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = sentiment_model_files(model_out);
    io.outputs.push_back(report_out);
}

inline void stage_predict(const StageContext& ctx, const json& entry, const std::string& id,
                          StageIO& io) {
    const fs::path model_base = resolve_input_basename(ctx, get_string(entry, "model", id), id);
    const fs::path encoder_base = resolve_input_basename(ctx, get_string(entry, "encoder", id), id);
    const fs::path table_path = resolve_input(ctx, get_string(entry, "table", id), id);
    const fs::path input_path = resolve_input(ctx, get_string(entry, "input", id), id);
    io.inputs = sentiment_model_files(model_base);
    append(io.inputs, encoder_files(encoder_base));
    io.inputs.push_back(table_path);
    io.inputs.push_back(input_path);

    const SentimentModel model = load_sentiment_model(model_base);
    const DanEncoder encoder = load_dan_encoder(encoder_base);
    const EmbeddingTable table =
        load_embeddings_text(table_path, nullptr, get_string_or(entry, "language", ""));
    // "map" is one basename or a chain of basenames composed left to right,
    // e.g. [low->pivot, pivot->high] for two-hop routing.
    std::optional<LinearMap> map;
    if (entry.contains("map") && !entry.at("map").is_null()) {
        std::vector<std::string> names;
        if (entry.at("map").is_string()) names.push_back(entry.at("map").get<std::string>());
        else names = entry.at("map").get<std::vector<std::string>>();
        for (const auto& name : names) {
            const fs::path map_base = resolve_input_basename(ctx, name, id);
            append(io.inputs, linear_map_files(map_base));
            LinearMap next = load_linear_map(map_base);
            map = map ? compose(*map, next) : std::move(next);
        }
    }

    const Corpus sentences = load_corpus(input_path);
    const bool remap = get_or<bool>(entry, "negation_remap", true);
    std::string out;
    for (const auto& raw_tokens : sentences.sentences) {
        const auto tokens =
            remap ? apply_negation_remap(raw_tokens, ctx.negation_remap) : raw_tokens;
        const Prediction pred =
            predict(model, encoder, table, map ? &*map : nullptr, tokens);
        out += prediction_to_json(tokens, pred).dump();
        out += '\n';
    }
    const fs::path output = output_path(ctx, get_string(entry, "output", id));
    atomic_write(output, out);
    io.outputs = {output};
}

inline void stage_evaluate(const StageContext& ctx, const json& entry, const std::string& id,
                           StageIO& io) {
    const fs::path pred_path = resolve_input(ctx, get_string(entry, "predictions", id), id);
    const fs::path gold_path = resolve_input(ctx, get_string(entry, "gold", id), id);
    io.inputs = {pred_path, gold_path};

    std::vector<Polarity> predictions;
    const std::string pred_text = read_file(pred_path);
    for (const auto line : split_lines(pred_text)) {
        if (trim(line).empty()) continue;
        const auto j = json::parse(line);
        predictions.push_back(polarity_from_name(j.at("label").get<std::string>()));
    }
    const auto gold_sentences = load_labeled_tsv(gold_path);
    std::vector<Polarity> gold;
    gold.reserve(gold_sentences.size());
    for (const auto& s : gold_sentences) gold.push_back(s.label);

    const EvalReport report = evaluate(predictions, gold);
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    atomic_write(report_out, eval_report_to_json(report).dump(2) + "\n");
    io.outputs = {report_out};

    if (entry.contains("text_out")) {
        const fs::path text_out = output_path(ctx, get_string(entry, "text_out", id));
        std::string text = format_eval_report(report);
        text += "\n\nlabel precision recall f1 support\n";
        for (std::size_t c = 0; c < 2; ++c) {
            text += c == 0 ? "neg   " : "pos   ";
            text += format_metric(report.per_label[c].precision) + "      " +
                    format_metric(report.per_label[c].recall) + "   " +
                    format_metric(report.per_label[c].f1) + " " +
                    std::to_string(report.support[c]) + "\n";
        }
        text += "accuracy " + format_metric(report.accuracy) + "\n";
        atomic_write(text_out, text);
        io.outputs.push_back(text_out);
    }
}

inline void stage_stats(const StageContext& ctx, const json& entry, const std::string& id,
                        StageIO& io) {
    const fs::path manifest_path = resolve_input(ctx, get_string(entry, "corpus_manifest", id), id);
    io.inputs.push_back(manifest_path);
    const ParallelCorpus corpus = load_parallel_corpus(manifest_path);
    for (const auto& lang : corpus.languages) {
        const auto j = json::parse(read_file(manifest_path));
        fs::path p = j.at("files").at(lang).get<std::string>();
        if (p.is_relative()) p = manifest_path.parent_path() / p;
        io.inputs.push_back(p);
    }
    const auto stats = corpus_stats(corpus);
    json j;
    j["languages"] = json::array();
    for (const auto& s : stats)
        j["languages"].push_back(
            {{"language", s.language}, {"tokens", s.tokens}, {"sentences", s.sentences}});
    const fs::path report_out = output_path(ctx, get_string(entry, "report_out", id));
    atomic_write(report_out, j.dump(2) + "\n");
    io.outputs = {report_out};
}

// ---------------------------------------------------------------------------
// Orchestration: manifests, skipping, run_all
// ---------------------------------------------------------------------------

inline const std::map<std::string, void (*)(const StageContext&, const json&, const std::string&,
                                            StageIO&)>&
stage_registry() {
    static const std::map<std::string,
                          void (*)(const StageContext&, const json&, const std::string&, StageIO&)>
        registry = {
            {"convert", stage_convert},
            {"pca", stage_pca},
            {"clone", stage_clone},
            {"finetune", stage_finetune},
            {"align", stage_align},
            {"eval-align", stage_eval_align},
            {"train-encoder", stage_train_encoder},
            {"train-classifier", stage_train_classifier},
            {"predict", stage_predict},
            {"evaluate", stage_evaluate},
            {"stats", stage_stats},
        };
    return registry;
}

inline fs::path manifest_path_for(const StageContext& ctx, const std::string& id) {
    return ctx.out_dir / "manifests" / (id + ".json");
}

// A stage is up to date when its recorded entry config, seed and input
// hashes all match and its outputs still exist. Output hashes are recorded
// for audit but deliberately not compared: replacing an intermediate file
// re-runs its consumers, not its producer (make-style semantics).
inline bool stage_up_to_date(const StageContext& ctx, const std::string& id, const json& entry) {
    const fs::path mpath = manifest_path_for(ctx, id);
    if (!fs::exists(mpath)) return false;
    json manifest;
    try {
        manifest = json::parse(read_file(mpath));
    } catch (...) {
        return false;
    }
    if (!manifest.contains("entry") || manifest.at("entry") != entry) return false;
    if (!manifest.contains("seed") || manifest.at("seed").get<std::uint64_t>() != ctx.seed)
        return false;
    if (!manifest.contains("inputs") || !manifest.contains("outputs")) return false;
    for (const auto& [path, hash] : manifest.at("inputs").items()) {
        if (!fs::exists(path)) return false;
        if (hash_file_hex(path) != hash.get<std::string>()) return false;
    }
    for (const auto& [path, hash] : manifest.at("outputs").items()) {
        (void)hash;
        if (!fs::exists(path)) return false;
    }
    return true;
}

inline void write_manifest(const StageContext& ctx, const std::string& id,
                           const std::string& stage, const json& entry, const StageIO& io) {
    json manifest;
    manifest["id"] = id;
    manifest["stage"] = stage;
    manifest["seed"] = ctx.seed;
    manifest["entry"] = entry;
    auto& inputs = manifest["inputs"] = json::object();
    for (const auto& p : io.inputs) inputs[p.string()] = hash_file_hex(p);
    auto& outputs = manifest["outputs"] = json::object();
    for (const auto& p : io.outputs) outputs[p.string()] = hash_file_hex(p);
    manifest["completed_at_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    atomic_write(manifest_path_for(ctx, id), manifest.dump(2) + "\n");
}

struct RunSummary {
    std::size_t executed = 0;
    std::size_t skipped = 0;
};

struct PipelineConfig {
    json document;
    fs::path config_dir;
};

inline PipelineConfig load_pipeline_config(const fs::path& config_path) {
    if (!fs::exists(config_path))
        throw MissingInputError("config file not found: " + config_path.string());
    PipelineConfig config;
    try {
        config.document = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
        throw ConfigError(config_path.string() + ": invalid JSON: " + e.what());
    }
    config.config_dir = fs::absolute(config_path).parent_path();
    if (!config.document.contains("pipeline") || !config.document.at("pipeline").is_array() ||
        config.document.at("pipeline").empty())
        throw ConfigError(config_path.string() + ": config must hold a non-empty 'pipeline' array");
    return config;
}

// Runs the pipeline in config order. `only` restricts execution to entries
// whose stage name or id matches.
inline RunSummary run_all(const PipelineConfig& config,
                          const std::optional<std::string>& only = std::nullopt,
                          std::optional<std::uint64_t> seed_override = std::nullopt,
                          std::optional<fs::path> out_dir_override = std::nullopt,
                          std::ostream* log = &std::cerr) {
    StageContext ctx;
    ctx.config_dir = config.config_dir;
    ctx.seed = seed_override.value_or(config.document.value("seed", 42ull));
    fs::path out_dir = out_dir_override.value_or(
        fs::path(config.document.value("out_dir", std::string("out"))));
    if (out_dir.is_relative()) out_dir = ctx.config_dir / out_dir;
    ctx.out_dir = out_dir;
    ctx.log = log;
    if (config.document.contains("negation_remap")) {
        ctx.negation_remap.clear();
        for (const auto& item : config.document.at("negation_remap")) {
            if (!item.is_array() || item.size() != 2)
                throw ConfigError("negation_remap entries must be [from, to]");
            ctx.negation_remap.emplace_back(item.at(0).get<std::string>(),
                                            item.at(1).get<std::string>());
        }
    }
    fs::create_directories(ctx.out_dir);

    RunSummary summary;
    std::size_t position = 0;
    for (const auto& entry : config.document.at("pipeline")) {
        ++position;
        if (!entry.is_object() || !entry.contains("stage"))
            throw ConfigError("pipeline entry " + std::to_string(position) +
                              " must be an object with a 'stage' field");
        const std::string stage = entry.at("stage").get<std::string>();
        const std::string id = entry.value("id", stage + "-" + std::to_string(position));
        if (only && *only != stage && *only != id) continue;

        const auto it = stage_registry().find(stage);
        if (it == stage_registry().end())
            throw ConfigError("stage '" + id + "': unknown stage '" + stage + "'");

        if (stage_up_to_date(ctx, id, entry)) {
            ++summary.skipped;
            if (ctx.log) *ctx.log << "[" << id << "] skip (up to date)\n";
            continue;
        }
        if (ctx.log) *ctx.log << "[" << id << "] run " << stage << "\n";
        StageIO io;
        try {
            it->second(ctx, entry, id, io);
        } catch (const json::exception& e) {
            throw ConfigError("stage '" + id + "': " + e.what());
        }
        write_manifest(ctx, id, stage, entry, io);
        ++summary.executed;
    }
    if (summary.executed == 0 && summary.skipped == 0 && only)
        throw ConfigError("no pipeline entry matches stage or id '" + *only + "'");
    return summary;
}

}  // namespace pipeline
}  // namespace xling
