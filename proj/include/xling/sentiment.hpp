#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/dan.hpp"
#include "xling/nn.hpp"

namespace xling {

enum class Polarity { neg, pos };

// Class indices follow label_order = [neg, pos] everywhere.
inline std::size_t polarity_index(Polarity p) { return p == Polarity::neg ? 0 : 1; }

inline const char* polarity_name(Polarity p) { return p == Polarity::neg ? "neg" : "pos"; }

inline Polarity polarity_from_name(const std::string& name) {
    if (name == "neg") return Polarity::neg;
    if (name == "pos") return Polarity::pos;
    throw std::invalid_argument("label must be 'pos' or 'neg', got '" + name + "'");
}

struct LabeledSentence {
    std::vector<std::string> tokens;
    Polarity label = Polarity::neg;
    std::string language;
};

// TSV: label <TAB> token token token
inline std::vector<LabeledSentence> load_labeled_tsv(const std::filesystem::path& path,
                                                     std::string language = "") {
    std::vector<LabeledSentence> out;
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
            throw parse_error(path.string() + ": expected label<TAB>tokens at line " +
                              std::to_string(ln + 1));
        LabeledSentence s;
        s.language = language;
        try {
            s.label = polarity_from_name(std::string(trim(line.substr(0, tab))));
        } catch (const std::invalid_argument& e) {
            throw parse_error(path.string() + ": " + e.what() + " at line " +
                              std::to_string(ln + 1));
        }
        for (const auto f : split_ws(line.substr(tab + 1))) s.tokens.emplace_back(f);
        if (s.tokens.empty())
            throw parse_error(path.string() + ": empty sentence at line " + std::to_string(ln + 1));
        out.push_back(std::move(s));
    }
    return out;
}

// TSV: stars <TAB> token token token. Review-style ratings binarize as
// 1..neg_max -> neg, pos_min..5 -> pos; anything between is dropped.
inline std::vector<LabeledSentence> load_star_ratings_tsv(const std::filesystem::path& path,
                                                          std::string language = "",
                                                          int neg_max = 2, int pos_min = 4) {
    if (!(neg_max >= 1 && neg_max < pos_min && pos_min <= 5))
        throw std::invalid_argument("star binarization thresholds must satisfy 1 <= neg_max < "
                                    "pos_min <= 5");
    std::vector<LabeledSentence> out;
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
            throw parse_error(path.string() + ": expected stars<TAB>tokens at line " +
                              std::to_string(ln + 1));
        const auto stars = parse_int(trim(line.substr(0, tab)));
        if (!stars || *stars < 1 || *stars > 5)
            throw parse_error(path.string() + ": star rating must be an integer in [1,5] at line " +
                              std::to_string(ln + 1));
        if (*stars > neg_max && *stars < pos_min) continue;  // neutral band dropped
        LabeledSentence s;
        s.language = language;
        s.label = *stars <= neg_max ? Polarity::neg : Polarity::pos;
        for (const auto f : split_ws(line.substr(tab + 1))) s.tokens.emplace_back(f);
        if (s.tokens.empty())
            throw parse_error(path.string() + ": empty sentence at line " + std::to_string(ln + 1));
        out.push_back(std::move(s));
    }
    return out;
}

// Uniform concatenation of several sources, shuffled under seed.
inline std::vector<LabeledSentence> concat_shuffle(
    const std::vector<std::vector<LabeledSentence>>& sources, std::uint64_t seed) {
    std::vector<LabeledSentence> all;
    for (const auto& src : sources) all.insert(all.end(), src.begin(), src.end());
    std::mt19937_64 rng(seed);
    shuffle_inplace(all, rng);
    return all;
}

struct SentimentModel {
    FeedForwardNet classifier;  // pooled-dim -> hidden -> hidden -> 2
    std::string encoder_ref;    // identifier of the encoder it was trained with
    std::array<Polarity, 2> label_order{Polarity::neg, Polarity::pos};
};

// input -> hidden (relu) -> hidden (relu) -> 2 logits, dropout before the
// final classification layer. With input 100 and hidden 300 this is the
// 121,202-parameter configuration.
inline FeedForwardNet make_sentiment_classifier(std::size_t input_dim, std::size_t hidden_dim,
                                                double dropout_rate, std::mt19937_64& rng) {
    FeedForwardNet net = make_net({input_dim, hidden_dim, hidden_dim, 2},
                                  {Activation::relu, Activation::relu, Activation::identity},
                                  dropout_rate, 2);
    init_glorot(net, rng);
    return net;
}

struct ClassifierTrainResult {
    SentimentModel model;
    std::vector<double> loss_trace;
    double train_accuracy = 0.0;
    std::size_t empty_encodings = 0;  // sentences that pooled to zero (all OOV)
};

struct ClassifierOptions {
    std::size_t hidden_dim = 300;
    double dropout_rate = 0.5;
    std::string encoder_ref;
};

// Encodes every sentence with the frozen DAN, then trains the classifier
// with dropout active. Deterministic under spec.seed.
inline ClassifierTrainResult train_classifier(const DanEncoder& encoder,
                                              const EmbeddingTable& table,
                                              const std::vector<LabeledSentence>& data,
                                              const TrainSpec& spec,
                                              const ClassifierOptions& options = {}) {
    encoder.validate();
    spec.validate();
    if (spec.loss != LossKind::softmax_cross_entropy)
        throw std::invalid_argument("train_classifier: spec.loss must be softmax_cross_entropy");
    if (data.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    bool seen[2] = {false, false};
    for (const auto& s : data) seen[polarity_index(s.label)] = true;
    if (!seen[0] || !seen[1])
        throw std::invalid_argument("train_classifier: dataset must contain both classes");

    ClassifierTrainResult result;
    std::vector<LabeledVector> dataset;
    dataset.reserve(data.size());
    for (const auto& s : data) {
        const auto enc = encode(encoder, table, s.tokens);
        if (enc.empty) ++result.empty_encodings;
        dataset.push_back({enc.vector, polarity_index(s.label)});
    }

    std::mt19937_64 init_rng(spec.seed);
    SentimentModel model;
    model.classifier = make_sentiment_classifier(encoder.output_dim(), options.hidden_dim,
                                                 options.dropout_rate, init_rng);
    model.encoder_ref = options.encoder_ref;

    const auto train_result = train(model.classifier, dataset, spec);
    result.loss_trace = train_result.loss_trace;

    std::size_t correct = 0;
    for (const auto& sample : dataset) {
        const auto out = forward(model.classifier, sample.input, Mode::infer).output;
        const std::size_t predicted = out[1] > out[0] ? 1 : 0;
        if (predicted == sample.target) ++correct;
    }
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    result.model = std::move(model);
    return result;
}

struct Prediction {
    Polarity label = Polarity::neg;
    std::array<double, 2> probabilities{0.0, 0.0};  // [p_neg, p_pos]
    double coverage = 0.0;
    bool low_confidence = false;  // encoded from an all-OOV sentence
};

// Ties break toward neg.
inline Prediction predict(const SentimentModel& model, const DanEncoder& encoder,
                          const EmbeddingTable& table, const LinearMap* map,
                          const std::vector<std::string>& tokens) {
    const auto enc = encode(encoder, table, tokens, map);
    const auto logits = forward(model.classifier, enc.vector, Mode::infer).output;
    const auto probs = softmax(logits);
    Prediction pred;
    pred.probabilities = {probs[0], probs[1]};
    pred.label = probs[1] > probs[0] ? Polarity::pos : Polarity::neg;
    pred.coverage = enc.coverage;
    pred.low_confidence = enc.empty;
    return pred;
}

inline nlohmann::json prediction_to_json(const std::vector<std::string>& tokens,
                                         const Prediction& pred) {
    return {{"tokens", tokens},
            {"label", polarity_name(pred.label)},
            {"p_neg", pred.probabilities[0]},
            {"p_pos", pred.probabilities[1]},
            {"coverage", pred.coverage}};
}

inline void save_sentiment_model(const SentimentModel& model,
                                 const std::filesystem::path& basename) {
    nlohmann::json j;
    j["type"] = "sentiment_model";
    j["encoder_ref"] = model.encoder_ref;
    j["label_order"] = {polarity_name(model.label_order[0]), polarity_name(model.label_order[1])};
    atomic_write(basename.string() + ".json", j.dump(2) + "\n");
    save_net(model.classifier, basename.string() + ".classifier");
}

inline SentimentModel load_sentiment_model(const std::filesystem::path& basename) {
    const auto j = nlohmann::json::parse(read_file(basename.string() + ".json"));
    if (j.at("type").get<std::string>() != "sentiment_model")
        throw parse_error(basename.string() + ": not a sentiment_model manifest");
    SentimentModel model;
    model.encoder_ref = j.at("encoder_ref").get<std::string>();
    model.classifier = load_net(basename.string() + ".classifier");
    if (model.classifier.output_dim() != 2)
        throw parse_error(basename.string() + ": classifier must emit 2 logits");
    return model;
}

}  // namespace xling
