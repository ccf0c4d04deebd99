#include "pvminer/labels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pvminer/container.hpp"
#include "pvminer/errors.hpp"
#include "pvminer/io.hpp"

namespace pvminer {

LabelSchema::LabelSchema(std::vector<CodeSpec> codes) : m_codes(std::move(codes)) {
    if (m_codes.empty()) {
        throw InvalidArgument("label schema has no codes");
    }
    std::set<std::string> seen_codes;
    for (const auto& c : m_codes) {
        if (c.name.empty() || c.name.find('_') != std::string::npos) {
            throw InvalidArgument("invalid code name '" + c.name + "': must be non-empty without underscores");
        }
        if (!seen_codes.insert(c.name).second) {
            throw InvalidArgument("duplicate code '" + c.name + "'");
        }
        if (c.subcodes.empty()) {
            m_combos.push_back(join_combo(c.name, std::nullopt));
            continue;
        }
        for (const auto& s : c.subcodes) {
            if (s.empty()) {
                throw InvalidArgument("code '" + c.name + "' has an empty subcode");
            }
            m_combos.push_back(c.name + "_" + s);
        }
    }
    std::sort(m_combos.begin(), m_combos.end());
    if (auto dup = std::adjacent_find(m_combos.begin(), m_combos.end()); dup != m_combos.end()) {
        throw InvalidArgument("duplicate combo '" + *dup + "'");
    }
    for (std::size_t i = 0; i < m_combos.size(); ++i) {
        m_ids.emplace(m_combos[i], static_cast<int>(i));
    }
}

LabelSchema LabelSchema::from_combos(std::span<const std::string> combos) {
    if (combos.empty()) {
        throw InvalidArgument("cannot build a schema from an empty annotation set");
    }
    std::map<std::string, std::set<std::string>> grouped;
    for (const auto& combo : combos) {
        auto d = decompose(combo);
        auto& subs = grouped[d.code];
        if (d.subcode) {
            subs.insert(*d.subcode);
        } else {
            subs.insert(std::string(kNoSubcode));
        }
    }
    std::vector<CodeSpec> codes;
    for (auto& [code, subs] : grouped) {
        CodeSpec spec{code, {}};
        if (!(subs.size() == 1 && *subs.begin() == kNoSubcode)) {
            spec.subcodes.assign(subs.begin(), subs.end());
        }
        codes.push_back(std::move(spec));
    }
    return LabelSchema(std::move(codes));
}

LabelSchema LabelSchema::default_schema() {
    return LabelSchema({
        {"CareCoordinationPatient", {}},
        {"CareCoordinationProvider", {}},
        {"PartnershipPatient",
         {"Appreciation/Gratitude", "Clinical Care", "activeParticipation/involvement", "alignment", "build trust",
          "connection", "expressOpinions", "salutation", "signoff", "statePreferences"}},
        {"PartnershipProvider",
         {"Appreciation/Gratitude", "Clinical Care", "acknowledgePatientExpertiseKnowledge", "alignment",
          "build trust", "checkingUnderstanding/clarification", "connection", "inviteCollabration",
          "maintainCommunication", "requestsForOpinion", "salutation", "signoff"}},
        {"SDOH",
         {"EconomicStability", "EducationAccessAndQuality", "HealthCareAccessAndQuality",
          "NeighborhoodAndBuiltEnvironment", "SocialAndCommunityContext"}},
        {"SharedDecisionPatient", {"ApprovalofDecision/Reinforcement", "ExploreOptions", "SeekingApproval"}},
        {"SharedDecisionProvider",
         {"Approval/Reinforcement", "MakeDecision", "ShareOptions", "Summarize and Confirm Understanding"}},
        {"SocioEmotionalBehaviour", {}},
    });
}

std::vector<std::string> LabelSchema::code_names() const {
    std::set<std::string> out;
    for (const auto& c : m_combos) {
        out.insert(decompose(c).code);
    }
    return {out.begin(), out.end()};
}

std::vector<std::string> LabelSchema::subcode_names() const {
    std::set<std::string> out;
    for (const auto& c : m_combos) {
        if (auto s = decompose(c).subcode) {
            out.insert(*s);
        }
    }
    return {out.begin(), out.end()};
}

bool LabelSchema::contains(std::string_view combo) const {
    return m_ids.find(combo) != m_ids.end();
}

int LabelSchema::id(std::string_view combo) const {
    auto it = m_ids.find(combo);
    if (it == m_ids.end()) {
        throw InvalidArgument("combo '" + std::string(combo) + "' is not in the label schema");
    }
    return it->second;
}

const std::string& LabelSchema::name(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= m_combos.size()) {
        throw InvalidArgument("label id " + std::to_string(id) + " out of range [0, " +
                              std::to_string(m_combos.size()) + ")");
    }
    return m_combos[static_cast<std::size_t>(id)];
}

nlohmann::json LabelSchema::to_json() const {
    nlohmann::json codes = nlohmann::json::object();
    for (const auto& c : m_codes) {
        codes[c.name] = c.subcodes;
    }
    return {{"codes", codes}};
}

LabelSchema LabelSchema::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("codes") || !j.at("codes").is_object()) {
        throw InvalidArgument("schema JSON must be {\"codes\": {code: [subcodes...]}}");
    }
    std::vector<CodeSpec> codes;
    for (const auto& [name, subs] : j.at("codes").items()) {
        if (!subs.is_array()) {
            throw InvalidArgument("subcodes of '" + name + "' must be an array");
        }
        CodeSpec spec{name, {}};
        for (const auto& s : subs) {
            spec.subcodes.push_back(s.get<std::string>());
        }
        codes.push_back(std::move(spec));
    }
    return LabelSchema(std::move(codes));
}

std::string LabelSchema::fingerprint() const {
    std::string bytes;
    for (const auto& c : m_combos) {
        bytes += c;
        bytes += '\n';
    }
    return io::hex64(io::fnv1a(bytes));
}

LabelSchema load_schema(const std::filesystem::path& path) {
    return LabelSchema::from_json(io::read_json(path));
}

void save_schema(const LabelSchema& schema, const std::filesystem::path& path) {
    io::write_json_atomic(path, schema.to_json());
}

Decomposed decompose(std::string_view combo) {
    const auto pos = combo.find('_');
    if (pos == std::string_view::npos || pos == 0 || pos + 1 == combo.size()) {
        throw InvalidArgument("malformed combo '" + std::string(combo) + "': expected Code_Subcode");
    }
    Decomposed d{std::string(combo.substr(0, pos)), std::nullopt};
    const auto sub = combo.substr(pos + 1);
    if (sub != kNoSubcode) {
        d.subcode = std::string(sub);
    }
    return d;
}

std::string join_combo(std::string_view code, const std::optional<std::string>& subcode) {
    return std::string(code) + "_" + (subcode ? *subcode : std::string(kNoSubcode));
}

MultiHot encode_labels(const LabelSchema& schema, std::span<const std::string> combos) {
    MultiHot bits(schema.size(), 0);
    for (const auto& c : combos) {
        bits[static_cast<std::size_t>(schema.id(c))] = 1;
    }
    return bits;
}

std::vector<std::string> decode_labels(const LabelSchema& schema, const MultiHot& bits) {
    if (bits.size() != schema.size()) {
        throw InvalidArgument("multi-hot length " + std::to_string(bits.size()) + " does not match schema size " +
                              std::to_string(schema.size()));
    }
    std::vector<std::string> out;
    for (std::size_t j = 0; j < bits.size(); ++j) {
        if (bits[j]) {
            out.push_back(schema.combos()[j]);
        }
    }
    return out;
}

std::string_view author_name(Author a) {
    return a == Author::patient ? "patient" : "provider";
}

Author parse_author(std::string_view name) {
    if (name == "patient") {
        return Author::patient;
    }
    if (name == "provider") {
        return Author::provider;
    }
    throw InvalidArgument("author must be \"patient\" or \"provider\", got \"" + std::string(name) + "\"");
}

nlohmann::json message_to_json(const AnnotatedMessage& m) {
    nlohmann::json j{{"id", m.id}, {"author", author_name(m.author)}, {"text", m.text}};
    if (m.labels) {
        j["labels"] = *m.labels;
    }
    return j;
}

AnnotatedMessage message_from_json(const nlohmann::json& j) {
    AnnotatedMessage m;
    try {
        m.id = j.at("id").get<std::string>();
        m.author = parse_author(j.at("author").get<std::string>());
        m.text = j.at("text").get<std::string>();
        if (j.contains("labels") && !j.at("labels").is_null()) {
            m.labels = j.at("labels").get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed message: ") + e.what());
    }
    return m;
}

std::vector<AnnotatedMessage> read_messages(const std::filesystem::path& path) {
    const auto text = io::read_text(path);
    std::vector<AnnotatedMessage> out;
    std::size_t line_no = 0, start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) {
            end = text.size();
        }
        ++line_no;
        const auto line = std::string_view(text).substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            out.push_back(message_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_messages(const std::filesystem::path& path, std::span<const AnnotatedMessage> messages) {
    std::string out;
    for (const auto& m : messages) {
        out += message_to_json(m).dump();
        out += '\n';
    }
    io::write_text_atomic(path, out);
}

void validate_messages(const LabelSchema& schema, std::span<const AnnotatedMessage> messages) {
    std::set<std::string> ids;
    for (const auto& m : messages) {
        if (!ids.insert(m.id).second) {
            throw InvalidArgument("duplicate message id '" + m.id + "'");
        }
        if (!m.labels) {
            continue;
        }
        for (const auto& l : *m.labels) {
            if (!schema.contains(l)) {
                throw InvalidArgument("message '" + m.id + "' has label '" + l + "' outside the schema");
            }
        }
    }
}

std::vector<std::vector<std::size_t>> iterative_stratified_split(std::span<const std::vector<std::string>> label_sets,
                                                                 std::span<const double> fractions,
                                                                 std::uint64_t seed) {
    const std::size_t n = label_sets.size();
    if (n == 0) {
        throw InvalidArgument("cannot split an empty dataset");
    }
    if (fractions.empty()) {
        throw InvalidArgument("split needs at least one fraction");
    }
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) {
            throw InvalidArgument("split fractions must be positive");
        }
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw InvalidArgument("split fractions must sum to 1, got " + std::to_string(total));
    }
    const std::size_t k = fractions.size();
    constexpr double kTie = 1e-9;

    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& l : std::set<std::string>(label_sets[i].begin(), label_sets[i].end())) {
            members[l].push_back(i);
        }
    }
    std::map<std::string, std::vector<double>> wanted;
    for (const auto& [l, idx] : members) {
        auto& w = wanted[l];
        for (double f : fractions) {
            w.push_back(f * static_cast<double>(idx.size()));
        }
    }
    std::vector<double> capacity;
    for (double f : fractions) {
        capacity.push_back(f * static_cast<double>(n));
    }

    std::mt19937_64 rng(seed);
    std::vector<int> where(n, -1);
    std::vector<std::vector<std::size_t>> subsets(k);

    auto place = [&](std::size_t i, std::size_t s) {
        where[i] = static_cast<int>(s);
        subsets[s].push_back(i);
        capacity[s] -= 1.0;
        for (const auto& l : std::set<std::string>(label_sets[i].begin(), label_sets[i].end())) {
            wanted[l][s] -= 1.0;
        }
    };
    auto pick = [&](const std::vector<double>* by_label) {
        std::vector<std::size_t> best;
        for (std::size_t s = 0; s < k; ++s) {
            if (best.empty()) {
                best.push_back(s);
                continue;
            }
            const std::size_t b = best.front();
            double diff = by_label ? (*by_label)[s] - (*by_label)[b] : 0.0;
            if (std::abs(diff) <= kTie) {
                diff = capacity[s] - capacity[b];
            }
            if (diff > kTie) {
                best.assign(1, s);
            } else if (diff >= -kTie) {
                best.push_back(s);
            }
        }
        if (best.size() == 1) {
            return best.front();
        }
        return best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
    };

    for (;;) {
        // Label with the fewest unassigned examples; ties by name.
        const std::string* rarest = nullptr;
        std::size_t fewest = 0;
        for (const auto& [l, idx] : members) {
            const auto left = static_cast<std::size_t>(
                std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return where[i] < 0; }));
            if (left > 0 && (!rarest || left < fewest)) {
                rarest = &l;
                fewest = left;
            }
        }
        if (!rarest) {
            break;
        }
        for (std::size_t i : members[*rarest]) {
            if (where[i] < 0) {
                place(i, pick(&wanted[*rarest]));
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (where[i] < 0) {
            place(i, pick(nullptr));
        }
    }
    for (auto& s : subsets) {
        std::sort(s.begin(), s.end());
    }
    return subsets;
}

} // namespace pvminer
