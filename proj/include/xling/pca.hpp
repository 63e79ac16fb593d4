#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "xling/embedding.hpp"
#include "xling/matrix.hpp"
#include "xling/text_io.hpp"

namespace xling {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PcaModel {
    std::vector<double> mean;        // length d_in
    Matrix components;               // d_in x d_out, orthonormal columns
    std::vector<double> explained_variance;  // length d_out, non-increasing

    std::size_t d_in() const { return components.rows; }
    std::size_t d_out() const { return components.cols; }
};

// Principal directions of the centered row set, via SVD of the centered
// matrix. Variances use the sample (n-1) convention. Sign convention: each
// component's largest-magnitude entry is non-negative, which pins down the
// SVD sign ambiguity.
inline PcaModel pca_fit(const EmbeddingTable& table, std::size_t target_dim) {
    const std::size_t n = table.size();
    const std::size_t d = table.dim;
    if (target_dim == 0 || target_dim > d)
        throw std::invalid_argument("pca_fit: target_dim must lie in [1, dim]");
    if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = table.row(i);
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += r[j];
    }
    for (double& m : model.mean) m /= static_cast<double>(n);

    EigenRowMajor centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = table.row(i);
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = r[j] - model.mean[j];
    }

    // Full V so that target_dim may go all the way to dim even when n < dim;
    // directions beyond the rank carry zero variance.
    Eigen::BDCSVD<EigenRowMajor> svd(centered, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const auto& v = svd.matrixV();  // d x d

    model.components = Matrix(d, target_dim);
    model.explained_variance.assign(target_dim, 0.0);
    for (std::size_t k = 0; k < target_dim; ++k) {
        // largest-|entry| non-negative
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = std::abs(v(j, k));
            if (a > best) {
                best = a;
                arg = j;
            }
        }
        const double sign = v(arg, k) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) model.components(j, k) = sign * v(j, k);
        if (k < static_cast<std::size_t>(sv.size()))
            model.explained_variance[k] = sv(k) * sv(k) / static_cast<double>(n - 1);
    }
    return model;
}

// Rows become (row - mean) * components; tokens are unchanged.
inline EmbeddingTable pca_apply(const PcaModel& model, const EmbeddingTable& table) {
    if (table.dim != model.d_in())
        throw std::invalid_argument("pca_apply: table dim != model input dim");
    Matrix out(table.size(), model.d_out());
    std::vector<double> centered(model.d_in());
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto r = table.row(i);
        for (std::size_t j = 0; j < model.d_in(); ++j) centered[j] = r[j] - model.mean[j];
        const auto projected = apply_row(centered, model.components);
        std::copy(projected.begin(), projected.end(), out.row(i).begin());
    }
    return make_table(table.tokens, std::move(out), table.language, table.rank_by_frequency);
}

inline void save_pca_model(const PcaModel& model, const std::filesystem::path& basename) {
    save_matrix_file(basename.string() + ".txt", model.components);
    nlohmann::json j;
    j["d_in"] = model.d_in();
    j["d_out"] = model.d_out();
    j["mean"] = model.mean;
    j["explained_variance"] = model.explained_variance;
    atomic_write(basename.string() + ".json", j.dump(2) + "\n");
}

inline PcaModel load_pca_model(const std::filesystem::path& basename) {
    PcaModel model;
    model.components = load_matrix_file(basename.string() + ".txt");
    const auto j = nlohmann::json::parse(read_file(basename.string() + ".json"));
    model.mean = j.at("mean").get<std::vector<double>>();
    model.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    if (model.mean.size() != model.components.rows ||
        j.at("d_in").get<std::size_t>() != model.components.rows ||
        j.at("d_out").get<std::size_t>() != model.components.cols)
        throw parse_error(basename.string() + ": PCA sidecar inconsistent with matrix");
    return model;
}

}  // namespace xling
