#include "pvminer/topic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include <Eigen/Dense>

#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"
#include "pvminer/tokenizer.hpp"

namespace pvminer {

Points Reducer::apply(const Points& data) const {
    Points out;
    out.reserve(data.size());
    for (const auto& row : data) {
        out.push_back(apply(std::span<const double>(row)));
    }
    return out;
}

void PcaReducer::fit(const Points& data, std::size_t dimensions) {
    if (dimensions < 2) {
        throw InvalidArgument("PCA: target dimension must be at least 2");
    }
    if (dimensions > data.size()) {
        throw InvalidArgument("PCA: target dimension " + std::to_string(dimensions) + " exceeds sample count " +
                              std::to_string(data.size()));
    }
    const std::size_t D = data.front().size();
    if (dimensions > D) {
        throw InvalidArgument("PCA: target dimension " + std::to_string(dimensions) + " exceeds input dimension " +
                              std::to_string(D));
    }
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(D));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = data[static_cast<std::size_t>(i)];
        if (row.size() != D) {
            throw InvalidArgument("PCA: rows have differing lengths");
        }
        for (std::size_t j = 0; j < D; ++j) {
            X(i, static_cast<Eigen::Index>(j)) = row[j];
        }
    }
    const Eigen::RowVectorXd mu = X.colwise().mean();
    X.rowwise() -= mu;
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw FitFailure("PCA: eigendecomposition did not converge");
    }

    m_mean = Tensor({D});
    for (std::size_t j = 0; j < D; ++j) {
        m_mean[j] = static_cast<float>(mu(static_cast<Eigen::Index>(j)));
    }
    m_axes = Tensor({dimensions, D});
    m_variances.assign(dimensions, 0.0);
    const auto& vectors = solver.eigenvectors();
    const auto& values = solver.eigenvalues();
    for (std::size_t k = 0; k < dimensions; ++k) {
        const auto col = static_cast<Eigen::Index>(D - 1 - k);
        Eigen::VectorXd v = vectors.col(col);
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            if (std::abs(v(j)) > 1e-12) {
                if (v(j) < 0) {
                    v = -v;
                }
                break;
            }
        }
        for (std::size_t j = 0; j < D; ++j) {
            m_axes.at(k, j) = static_cast<float>(v(static_cast<Eigen::Index>(j)));
        }
        m_variances[k] = std::max(values(col), 0.0);
    }
    double total = 0.0;
    for (double v : m_variances) {
        total += v;
    }
    m_scale = total > 1e-24 ? std::sqrt(total) : 1.0;
}

std::vector<double> PcaReducer::apply(std::span<const double> x) const {
    if (m_axes.empty()) {
        throw InvalidState("PCA reducer used before fit");
    }
    if (x.size() != m_mean.size()) {
        throw InvalidArgument("PCA: input has " + std::to_string(x.size()) + " dimensions, fitted on " +
                              std::to_string(m_mean.size()));
    }
    std::vector<double> out(dimensions(), 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            acc += (x[j] - static_cast<double>(m_mean[j])) * static_cast<double>(m_axes.at(k, j));
        }
        out[k] = acc / m_scale;
    }
    return out;
}

std::vector<double> PcaReducer::reconstruct(std::span<const double> reduced) const {
    std::vector<double> out(m_mean.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        double acc = m_mean[j];
        for (std::size_t k = 0; k < reduced.size(); ++k) {
            acc += reduced[k] * m_scale * static_cast<double>(m_axes.at(k, j));
        }
        out[j] = acc;
    }
    return out;
}

void PcaReducer::restore(Tensor mean, Tensor axes, double scale, std::vector<double> variances) {
    if (axes.rank() != 2 || axes.cols() != mean.size() || variances.size() != axes.rows() || !(scale > 0.0)) {
        throw InvalidArgument("PCA restore: inconsistent basis");
    }
    m_mean = std::move(mean);
    m_axes = std::move(axes);
    m_scale = scale;
    m_variances = std::move(variances);
}

DbscanClusterer::DbscanClusterer(double eps, std::size_t min_samples) : m_eps(eps), m_min_samples(min_samples) {
    if (!(eps > 0.0)) {
        throw InvalidArgument("DBSCAN: eps must be positive");
    }
    if (min_samples < 1) {
        throw InvalidArgument("DBSCAN: min_samples must be at least 1");
    }
}

std::vector<int> DbscanClusterer::cluster(const Points& points) const {
    const std::size_t n = points.size();
    const double eps2 = m_eps * m_eps;
    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i) {
        neighbours[i].push_back(i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < points[i].size(); ++k) {
                const double diff = points[i][k] - points[j][k];
                d2 += diff * diff;
            }
            if (d2 <= eps2) {
                neighbours[i].push_back(j);
                neighbours[j].push_back(i);
            }
        }
    }
    std::vector<int> labels(n, kOutlierTopic);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != kOutlierTopic || neighbours[i].size() < m_min_samples) {
            continue;
        }
        const int id = next++;
        labels[i] = id;
        std::deque<std::size_t> frontier{i};
        while (!frontier.empty()) {
            const std::size_t p = frontier.front();
            frontier.pop_front();
            if (neighbours[p].size() < m_min_samples) {
                continue;
            }
            for (std::size_t q : neighbours[p]) {
                if (labels[q] == kOutlierTopic) {
                    labels[q] = id;
                    frontier.push_back(q);
                }
            }
        }
    }
    return labels;
}

std::vector<int> dbscan(const Points& points, double eps, std::size_t min_samples) {
    return DbscanClusterer(eps, min_samples).cluster(points);
}

const std::vector<std::string>& stop_words() {
    static const std::vector<std::string> words{
        "a",    "an",   "the",  "and",  "or",    "but",   "if",   "of",  "to",   "in",
        "on",   "at",   "for",  "with", "from",  "by",    "as",   "is",  "are",  "was",
        "were", "be",   "been", "it",   "its",   "this",  "that", "these", "those", "i",
        "you",  "he",   "she",  "we",   "they",  "me",    "my",   "your", "our",  "their",
        "so",   "not",  "no",   "do",   "did",   "have",  "has",  "had", "will", "can"};
    return words;
}

std::vector<std::string> extract_terms(std::string_view text) {
    const auto& stops = stop_words();
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && std::find(stops.begin(), stops.end(), current) == stops.end()) {
            out.push_back(current);
        }
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '[') {
            auto it = std::find_if(kSpecialTokens.begin(), kSpecialTokens.end(),
                                   [&](std::string_view s) { return text.substr(i, s.size()) == s; });
            if (it != kSpecialTokens.end()) {
                flush();
                i += it->size() - 1;
                continue;
            }
        }
        const char c = text[i];
        if (c >= 'a' && c <= 'z') {
            current.push_back(c);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

std::vector<std::pair<std::string, double>> CtfidfMatrix::ranked(std::size_t cls) const {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t t = 0; t < terms.size(); ++t) {
        if (count[cls][t] > 0) {
            out.emplace_back(terms[t], weight[cls][t]);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    return out;
}

CtfidfMatrix ctfidf(const std::vector<std::vector<std::string>>& class_terms) {
    if (class_terms.empty()) {
        throw InvalidArgument("c-TF-IDF: no topics given");
    }
    CtfidfMatrix m;
    std::map<std::string, std::size_t> index;
    for (const auto& cls : class_terms) {
        for (const auto& t : cls) {
            index.emplace(t, 0);
        }
    }
    for (auto& [term, slot] : index) {
        slot = m.terms.size();
        m.terms.push_back(term);
    }
    const std::size_t C = class_terms.size(), V = m.terms.size();
    m.count.assign(C, std::vector<std::size_t>(V, 0));
    m.tf.assign(C, std::vector<double>(V, 0.0));
    m.weight.assign(C, std::vector<double>(V, 0.0));
    m.term_total.assign(V, 0.0);
    m.class_total.assign(C, 0);
    for (std::size_t c = 0; c < C; ++c) {
        for (const auto& t : class_terms[c]) {
            ++m.count[c][index[t]];
        }
        m.class_total[c] = class_terms[c].size();
        m.average += static_cast<double>(m.class_total[c]);
    }
    m.average /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < V; ++t) {
            m.term_total[t] += static_cast<double>(m.count[c][t]);
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (m.class_total[c] == 0) {
            continue;
        }
        for (std::size_t t = 0; t < V; ++t) {
            m.tf[c][t] = static_cast<double>(m.count[c][t]) / static_cast<double>(m.class_total[c]);
            m.weight[c][t] = m.tf[c][t] * std::log(1.0 + m.average / m.term_total[t]);
        }
    }
    return m;
}

nlohmann::json TopicParams::to_json() const {
    return {{"dimensions", dimensions}, {"eps", eps}, {"min_samples", min_samples}, {"top_k", top_k}};
}

TopicParams TopicParams::from_json(const nlohmann::json& j) {
    TopicParams p;
    try {
        p.dimensions = j.at("dimensions").get<std::size_t>();
        p.eps = j.at("eps").get<double>();
        p.min_samples = j.at("min_samples").get<std::size_t>();
        p.top_k = j.at("top_k").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("topic params: ") + e.what());
    }
    return p;
}

const std::vector<std::string>& TopicModel::ranked_terms(int topic) const {
    if (topic < 0 || static_cast<std::size_t>(topic) >= m_keywords.size()) {
        throw InvalidArgument("topic " + std::to_string(topic) + " has no keywords (model has " +
                              std::to_string(m_keywords.size()) + " topics)");
    }
    return m_keywords[static_cast<std::size_t>(topic)];
}

const std::vector<double>& TopicModel::ranked_weights(int topic) const {
    ranked_terms(topic);
    return m_keyword_weights[static_cast<std::size_t>(topic)];
}

namespace {

nlohmann::json topic_manifest_body(const TopicParams& params, const PcaReducer& r,
                                   const std::vector<std::vector<std::string>>& keywords,
                                   const std::vector<std::vector<double>>& weights, const std::vector<int>& docs) {
    return {{"params", params.to_json()},
            {"topic_count", keywords.size()},
            {"scale", r.scale()},
            {"variances", r.variances()},
            {"keywords", keywords},
            {"keyword_weights", weights},
            {"document_topics", docs}};
}

} // namespace

std::string TopicModel::fingerprint() const {
    std::string bytes =
        topic_manifest_body(m_params, m_reducer, m_keywords, m_keyword_weights, m_doc_topics).dump();
    bytes += io::f32_bytes(m_reducer.mean().data());
    bytes += io::f32_bytes(m_reducer.axes().data());
    bytes += io::f32_bytes(m_centroids.data());
    return io::hex64(io::fnv1a(bytes));
}

bool operator==(const TopicModel& a, const TopicModel& b) {
    return a.fingerprint() == b.fingerprint();
}

TopicModel fit_topics(std::span<const std::string> corpus, const Embedder& embedder, const TopicParams& params) {
    if (corpus.empty()) {
        throw InvalidArgument("topic fit: corpus is empty");
    }
    DbscanClusterer clusterer(params.eps, params.min_samples);

    std::vector<std::size_t> embedded;
    Points vectors;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        std::vector<float> e;
        try {
            e = embedder(corpus[i]);
        } catch (const InvalidArgument&) {
            continue; // nothing to embed; stays an outlier
        }
        vectors.emplace_back(e.begin(), e.end());
        embedded.push_back(i);
    }
    if (vectors.empty()) {
        throw FitFailure("topic fit: no document could be embedded");
    }

    TopicModel model;
    model.m_params = params;
    model.m_reducer.fit(vectors, params.dimensions);
    const Points reduced = model.m_reducer.apply(vectors);
    const std::vector<int> labels = clusterer.cluster(reduced);
    const int topics = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (topics <= 0) {
        throw FitFailure("topic fit: every document was labeled as an outlier; increase eps or lower min_samples");
    }

    model.m_doc_topics.assign(corpus.size(), kOutlierTopic);
    const std::size_t d = params.dimensions;
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(topics), std::vector<double>(d, 0.0));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(topics), 0);
    std::vector<std::vector<std::string>> class_terms(static_cast<std::size_t>(topics));
    for (std::size_t k = 0; k < embedded.size(); ++k) {
        const int label = labels[k];
        model.m_doc_topics[embedded[k]] = label;
        if (label == kOutlierTopic) {
            continue;
        }
        const auto t = static_cast<std::size_t>(label);
        for (std::size_t j = 0; j < d; ++j) {
            sums[t][j] += reduced[k][j];
        }
        ++sizes[t];
        auto terms = extract_terms(corpus[embedded[k]]);
        class_terms[t].insert(class_terms[t].end(), terms.begin(), terms.end());
    }
    model.m_centroids = Tensor({static_cast<std::size_t>(topics), d});
    for (std::size_t t = 0; t < sums.size(); ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            model.m_centroids.at(t, j) = static_cast<float>(sums[t][j] / static_cast<double>(sizes[t]));
        }
    }
    const auto matrix = ctfidf(class_terms);
    for (std::size_t t = 0; t < class_terms.size(); ++t) {
        std::vector<std::string> words;
        std::vector<double> weights;
        for (auto& [w, v] : matrix.ranked(t)) {
            words.push_back(w);
            weights.push_back(v);
        }
        model.m_keywords.push_back(std::move(words));
        model.m_keyword_weights.push_back(std::move(weights));
    }
    return model;
}

int assign_embedding(const TopicModel& model, std::span<const float> embedding) {
    if (!model.fitted()) {
        throw InvalidState("topic model is not fitted");
    }
    std::vector<double> x(embedding.begin(), embedding.end());
    const auto point = model.reducer().apply(std::span<const double>(x));
    const auto& C = model.centroids();
    int best = 0;
    double best_d2 = 0.0;
    for (std::size_t t = 0; t < C.rows(); ++t) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < point.size(); ++j) {
            const double diff = point[j] - static_cast<double>(C.at(t, j));
            d2 += diff * diff;
        }
        if (t == 0 || d2 < best_d2) {
            best = static_cast<int>(t);
            best_d2 = d2;
        }
    }
    return best;
}

int assign(const TopicModel& model, std::string_view text, const Embedder& embedder) {
    if (!model.fitted()) {
        throw InvalidState("topic model is not fitted");
    }
    const auto e = embedder(text);
    return assign_embedding(model, e);
}

std::vector<std::string> top_keywords(const TopicModel& model, int topic, std::size_t k) {
    const auto& terms = model.ranked_terms(topic);
    return {terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(std::min(k, terms.size()))};
}

void save_topic_model(const TopicModel& model, const std::filesystem::path& dir) {
    if (!model.fitted()) {
        throw InvalidState("cannot save an unfitted topic model");
    }
    auto manifest = topic_manifest_body(model.params(), model.reducer(), [&] {
        std::vector<std::vector<std::string>> kw;
        for (std::size_t t = 0; t < model.topic_count(); ++t) {
            kw.push_back(model.ranked_terms(static_cast<int>(t)));
        }
        return kw;
    }(), [&] {
        std::vector<std::vector<double>> w;
        for (std::size_t t = 0; t < model.topic_count(); ++t) {
            w.push_back(model.ranked_weights(static_cast<int>(t)));
        }
        return w;
    }(), model.document_topics());
    manifest["format"] = "pvminer-topic";
    manifest["version"] = 1;
    manifest["fingerprint"] = model.fingerprint();
    manifest["weights"] = io::write_tensors(dir, {{"reducer.mean", &model.reducer().mean()},
                                                  {"reducer.axes", &model.reducer().axes()},
                                                  {"centroids", &model.centroids()}});
    io::write_json_atomic(dir / "manifest.json", manifest);
}

TopicModel load_topic_model(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    io::require_file(path, "topic-fit");
    const auto manifest = io::read_json(path);
    auto tensors = io::read_tensors(dir, io::field(manifest, "weights", path));
    for (const char* name : {"reducer.mean", "reducer.axes", "centroids"}) {
        if (!tensors.count(name)) {
            throw IoError("topic model '" + dir.string() + "' lacks tensor '" + name + "'");
        }
    }
    TopicModel model;
    try {
        model.m_params = TopicParams::from_json(manifest.at("params"));
        model.m_reducer.restore(tensors.at("reducer.mean"), tensors.at("reducer.axes"),
                                manifest.at("scale").get<double>(),
                                manifest.at("variances").get<std::vector<double>>());
        model.m_keywords = manifest.at("keywords").get<std::vector<std::vector<std::string>>>();
        model.m_keyword_weights = manifest.at("keyword_weights").get<std::vector<std::vector<double>>>();
        model.m_doc_topics = manifest.at("document_topics").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed topic manifest '" + path.string() + "': " + e.what());
    }
    model.m_centroids = tensors.at("centroids");
    if (model.m_centroids.rows() != model.m_keywords.size() ||
        model.m_centroids.cols() != model.m_reducer.dimensions()) {
        throw IoError("topic model '" + dir.string() + "' has inconsistent centroid shape");
    }
    if (manifest.contains("fingerprint") && manifest.at("fingerprint").get<std::string>() != model.fingerprint()) {
        throw InvalidState("topic model '" + dir.string() + "' does not match its recorded fingerprint");
    }
    return model;
}

} // namespace pvminer
