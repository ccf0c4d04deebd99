#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pvminer/tensor.hpp"

namespace pvminer {

using Points = std::vector<std::vector<double>>;

inline constexpr int kOutlierTopic = -1;

class Reducer {
public:
    virtual ~Reducer() = default;
    virtual void fit(const Points& data, std::size_t dimensions) = 0;
    virtual std::vector<double> apply(std::span<const double> x) const = 0;
    Points apply(const Points& data) const;
};

/// Projection onto the leading principal axes, then one isotropic rescale so
/// the reduced training data has unit total variance. Each axis is signed
/// so its first nonzero loading is positive.
class PcaReducer final : public Reducer {
public:
    void fit(const Points& data, std::size_t dimensions) override;
    std::vector<double> apply(std::span<const double> x) const override;
    using Reducer::apply;

    /// Inverse map back to input space (exact on the fitted subspace).
    std::vector<double> reconstruct(std::span<const double> reduced) const;

    std::size_t dimensions() const noexcept { return m_axes.rows(); }
    std::size_t input_dimensions() const noexcept { return m_mean.size(); }
    const Tensor& mean() const noexcept { return m_mean; }
    const Tensor& axes() const noexcept { return m_axes; }
    double scale() const noexcept { return m_scale; }
    /// Training-data variance along each axis, before rescaling.
    const std::vector<double>& variances() const noexcept { return m_variances; }

    void restore(Tensor mean, Tensor axes, double scale, std::vector<double> variances);

private:
    Tensor m_mean;
    Tensor m_axes; // [d, D]
    double m_scale = 1.0;
    std::vector<double> m_variances;
};

class Clusterer {
public:
    virtual ~Clusterer() = default;
    /// One label per point: 0..T-1, or -1 for noise.
    virtual std::vector<int> cluster(const Points& points) const = 0;
};

/// Neighbourhoods include the point itself; cluster ids follow the order in
/// which core points are first met.
class DbscanClusterer final : public Clusterer {
public:
    DbscanClusterer(double eps, std::size_t min_samples);
    std::vector<int> cluster(const Points& points) const override;

private:
    double m_eps;
    std::size_t m_min_samples;
};

std::vector<int> dbscan(const Points& points, double eps, std::size_t min_samples);

/// Lowercased ASCII-alphabetic words minus the stop-list; special-token
/// literals are dropped.
std::vector<std::string> extract_terms(std::string_view text);
const std::vector<std::string>& stop_words();

struct CtfidfMatrix {
    std::vector<std::string> terms;          // sorted
    std::vector<std::vector<double>> tf;     // [class][term]
    std::vector<std::vector<double>> weight; // [class][term]
    std::vector<std::vector<std::size_t>> count;
    std::vector<double> term_total;          // f_t
    std::vector<std::size_t> class_total;
    double average = 0.0;                    // A

    /// Terms present in the class ordered by weight, ties lexicographic.
    std::vector<std::pair<std::string, double>> ranked(std::size_t cls) const;
};

/// W[t,c] = tf[t,c] * ln(1 + A / f_t), one term list per class.
CtfidfMatrix ctfidf(const std::vector<std::vector<std::string>>& class_terms);

struct TopicParams {
    std::size_t dimensions = 5;
    double eps = 0.5;
    std::size_t min_samples = 5;
    std::size_t top_k = 3;

    nlohmann::json to_json() const;
    static TopicParams from_json(const nlohmann::json& j);
};

using Embedder = std::function<std::vector<float>(std::string_view)>;

class TopicModel {
public:
    bool fitted() const noexcept { return !m_centroids.empty(); }
    std::size_t topic_count() const noexcept { return m_keywords.size(); }
    const TopicParams& params() const noexcept { return m_params; }
    const PcaReducer& reducer() const noexcept { return m_reducer; }
    const Tensor& centroids() const noexcept { return m_centroids; }

    /// Full ranked term list of a topic with its weights.
    const std::vector<std::string>& ranked_terms(int topic) const;
    const std::vector<double>& ranked_weights(int topic) const;

    /// Labels of the training documents, -1 for outliers.
    const std::vector<int>& document_topics() const noexcept { return m_doc_topics; }

    /// FNV-1a over params, keywords and the raw float bytes.
    std::string fingerprint() const;

    friend bool operator==(const TopicModel& a, const TopicModel& b);

private:
    friend TopicModel fit_topics(std::span<const std::string>, const Embedder&, const TopicParams&);
    friend TopicModel load_topic_model(const std::filesystem::path&);

    TopicParams m_params;
    PcaReducer m_reducer;
    Tensor m_centroids; // [T, d]
    std::vector<std::vector<std::string>> m_keywords;
    std::vector<std::vector<double>> m_keyword_weights;
    std::vector<int> m_doc_topics;
};

/// Embed every document, reduce, cluster, and rank terms of each non-outlier
/// cluster with c-TF-IDF. Throws FitFailure when every document is noise.
TopicModel fit_topics(std::span<const std::string> corpus, const Embedder& embedder, const TopicParams& params = {});

/// Nearest centroid in reduced space; never -1.
int assign(const TopicModel& model, std::string_view text, const Embedder& embedder);
int assign_embedding(const TopicModel& model, std::span<const float> embedding);

std::vector<std::string> top_keywords(const TopicModel& model, int topic, std::size_t k);

void save_topic_model(const TopicModel& model, const std::filesystem::path& dir);
TopicModel load_topic_model(const std::filesystem::path& dir);

} // namespace pvminer
