#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "comfyflow/detail/parallel.hpp"
#include "comfyflow/error.hpp"
#include "comfyflow/ir.hpp"

namespace comfyflow {

/// One entry of the node database: a node type and its port signature.
struct NodeSpec {
    std::string node_name;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::optional<std::vector<std::string>> input_types;
    std::optional<std::vector<std::string>> output_types;
    // Absent means nothing is known to be required.
    std::optional<std::vector<std::string>> required_inputs;
    // Widget defaults keyed by input port name.
    std::map<std::string, json> input_defaults;

    bool is_required(std::string_view port) const {
        return required_inputs && std::find(required_inputs->begin(), required_inputs->end(), port) != required_inputs->end();
    }
    std::optional<std::size_t> input_index(std::string_view port) const {
        auto it = std::find(input_names.begin(), input_names.end(), port);
        if (it == input_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - input_names.begin());
    }
    std::optional<std::size_t> output_index(std::string_view port) const {
        auto it = std::find(output_names.begin(), output_names.end(), port);
        if (it == output_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - output_names.begin());
    }
    std::string input_type(std::size_t i) const { return input_types ? (*input_types)[i] : std::string(); }
    std::string output_type(std::size_t i) const { return output_types ? (*output_types)[i] : std::string(); }

    friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

inline json spec_to_json(const NodeSpec& s) {
    json j = {{"node_name", s.node_name}, {"input_names", s.input_names}, {"output_names", s.output_names}};
    if (s.input_types) j["input_types"] = *s.input_types;
    if (s.output_types) j["output_types"] = *s.output_types;
    if (s.required_inputs) j["required_inputs"] = *s.required_inputs;
    if (!s.input_defaults.empty()) j["input_defaults"] = s.input_defaults;
    return j;
}

namespace detail {

inline std::vector<std::string> string_list(const json& j, const std::string& path) {
    if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, path, "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) throw Error(ErrorCode::SchemaViolation, path + "/" + std::to_string(i), "expected a string");
        out.push_back(j[i].get<std::string>());
    }
    return out;
}

inline void check_unique_ports(const std::vector<std::string>& names, const std::string& path) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!valid_port_name(names[i]))
            throw Error(ErrorCode::BadPortName, path + "/" + std::to_string(i), "invalid port name '" + names[i] + "'");
        if (!seen.insert(names[i]).second)
            throw Error(ErrorCode::SchemaViolation, path + "/" + std::to_string(i), "duplicate port '" + names[i] + "'");
    }
}

}  // namespace detail

/// `path` prefixes error subjects, e.g. "/3" for the fourth record of a snapshot.
inline NodeSpec spec_from_json(const json& j, const std::string& path = "") {
    if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, path, "node spec must be an object");
    NodeSpec s;
    auto name = j.find("node_name");
    if (name == j.end() || !name->is_string() || name->get<std::string>().empty())
        throw Error(ErrorCode::SchemaViolation, path + "/node_name", "missing or empty node_name");
    s.node_name = name->get<std::string>();
    for (const char* key : {"input_names", "output_names"})
        if (!j.contains(key)) throw Error(ErrorCode::SchemaViolation, path + "/" + key, "missing");
    s.input_names = detail::string_list(j.at("input_names"), path + "/input_names");
    s.output_names = detail::string_list(j.at("output_names"), path + "/output_names");
    detail::check_unique_ports(s.input_names, path + "/input_names");
    detail::check_unique_ports(s.output_names, path + "/output_names");

    if (j.contains("input_types")) {
        s.input_types = detail::string_list(j["input_types"], path + "/input_types");
        if (s.input_types->size() != s.input_names.size())
            throw Error(ErrorCode::SchemaViolation, path + "/input_types", "length differs from input_names");
    }
    if (j.contains("output_types")) {
        s.output_types = detail::string_list(j["output_types"], path + "/output_types");
        if (s.output_types->size() != s.output_names.size())
            throw Error(ErrorCode::SchemaViolation, path + "/output_types", "length differs from output_names");
    }
    if (j.contains("required_inputs")) {
        s.required_inputs = detail::string_list(j["required_inputs"], path + "/required_inputs");
        for (const auto& r : *s.required_inputs)
            if (!s.input_index(r))
                throw Error(ErrorCode::SchemaViolation, path + "/required_inputs", "'" + r + "' is not an input");
    }
    if (j.contains("input_defaults")) {
        const auto& d = j["input_defaults"];
        if (!d.is_object()) throw Error(ErrorCode::SchemaViolation, path + "/input_defaults", "expected an object");
        for (const auto& [k, v] : d.items()) {
            if (!s.input_index(k))
                throw Error(ErrorCode::SchemaViolation, path + "/input_defaults/" + k, "not an input");
            s.input_defaults[k] = v;
        }
    }
    return s;
}

/// Parses a snapshot (JSON array of node specs) without embedding it.
inline std::vector<NodeSpec> parse_specs(std::string_view bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::MalformedJson, "", e.what());
    }
    if (!doc.is_array()) throw Error(ErrorCode::SchemaViolation, "", "node snapshot must be a JSON array");
    std::vector<NodeSpec> out;
    for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(spec_from_json(doc[i], "/" + std::to_string(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings.
// ---------------------------------------------------------------------------

/// A unit-length vector.
class Embedding {
public:
    Embedding() = default;

    /// Scales `raw` to unit length. A zero or non-finite vector is rejected.
    static Embedding normalized(std::vector<double> raw) {
        double sq = 0;
        for (double v : raw) sq += v * v;
        const double norm = std::sqrt(sq);
        if (!(norm > 0) || !std::isfinite(norm))
            throw Error(ErrorCode::EmbeddingFailure, "", "cannot normalize a zero or non-finite vector");
        for (double& v : raw) v /= norm;
        Embedding e;
        e.values_ = std::move(raw);
        return e;
    }

    const std::vector<double>& values() const { return values_; }
    std::size_t dimension() const { return values_.size(); }

    friend bool operator==(const Embedding&, const Embedding&) = default;

private:
    std::vector<double> values_;
};

/// Cosine similarity, clamped to [-1, 1] against rounding.
inline double similarity(const Embedding& a, const Embedding& b) {
    if (a.dimension() != b.dimension())
        throw Error(ErrorCode::DimensionMismatch, "",
                    std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.dimension(); ++i) {
        dot += a.values()[i] * b.values()[i];
        na += a.values()[i] * a.values()[i];
        nb += b.values()[i] * b.values()[i];
    }
    if (na == 0 || nb == 0) throw Error(ErrorCode::DimensionMismatch, "", "empty embedding");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Stable identifier; embeddings from different ids never mix.
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    /// Must be safe to call concurrently.
    virtual Embedding embed(std::string_view text) const = 0;
};

/// Offline embedder: ASCII-lowercased byte trigrams of " text " hashed with
/// FNV-1a into `dimension` buckets, then normalized.
class TrigramEmbedder final : public EmbeddingProvider {
public:
    explicit TrigramEmbedder(std::size_t dimension = 256) : dim_(dimension) {
        if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "dimension", "must be positive");
    }

    std::string id() const override { return "trigram-fnv1a/" + std::to_string(dim_); }
    std::size_t dimension() const override { return dim_; }

    Embedding embed(std::string_view text) const override {
        if (text.empty()) throw Error(ErrorCode::EmbeddingFailure, "", "cannot embed empty text");
        std::string padded = " ";
        for (unsigned char c : text) padded += static_cast<char>(std::tolower(c));
        padded += ' ';
        std::vector<double> v(dim_, 0.0);
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            std::uint64_t h = 1469598103934665603ull;
            for (std::size_t k = i; k < i + 3; ++k) {
                h ^= static_cast<unsigned char>(padded[k]);
                h *= 1099511628211ull;
            }
            v[h % dim_] += 1.0;
        }
        return Embedding::normalized(std::move(v));
    }

private:
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// The node database.
// ---------------------------------------------------------------------------

struct ScoredName {
    std::string node_name;
    double score = 0;

    friend bool operator==(const ScoredName&, const ScoredName&) = default;
};

/// Immutable after construction; concurrent reads are safe.
class NodeBase {
public:
    NodeBase() = default;

    static NodeBase from_specs(std::vector<NodeSpec> specs, const EmbeddingProvider& provider,
                               std::size_t parallelism = 1) {
        NodeBase b;
        b.provider_id_ = provider.id();
        b.dimension_ = provider.dimension();
        for (auto& s : specs) {
            if (b.specs_.contains(s.node_name))
                throw Error(ErrorCode::DuplicateNodeName, s.node_name, "node name appears twice");
            const auto name = s.node_name;
            b.specs_.emplace(name, std::move(s));
        }
        std::vector<const std::string*> names;
        for (const auto& [name, _] : b.specs_) names.push_back(&name);
        auto embeddings = detail::parallel_map(names.size(), parallelism, [&](std::size_t i) {
            const auto& name = *names[i];
            Embedding e;
            try {
                e = provider.embed(name);
            } catch (const std::exception& ex) {
                throw Error(ErrorCode::EmbeddingFailure, name, ex.what());
            }
            if (e.dimension() != b.dimension_)
                throw Error(ErrorCode::EmbeddingFailure, name,
                            "provider returned dimension " + std::to_string(e.dimension()));
            return e;
        });
        for (std::size_t i = 0; i < names.size(); ++i) b.embeddings_.emplace(*names[i], std::move(embeddings[i]));
        return b;
    }

    static NodeBase ingest(std::string_view bytes, const EmbeddingProvider& provider, std::size_t parallelism = 1) {
        return from_specs(parse_specs(bytes), provider, parallelism);
    }

    /// Union with `newer`; on name collisions the record from `newer` wins.
    NodeBase merge(const NodeBase& newer) const {
        if (empty()) return newer;
        if (newer.empty()) return *this;
        if (newer.provider_id_ != provider_id_)
            throw Error(ErrorCode::ProviderMismatch, newer.provider_id_, "base uses " + provider_id_);
        NodeBase out = *this;
        for (const auto& [name, spec] : newer.specs_) {
            out.specs_.insert_or_assign(name, spec);
            out.embeddings_.insert_or_assign(name, newer.embeddings_.at(name));
        }
        return out;
    }

    std::size_t size() const { return specs_.size(); }
    bool empty() const { return specs_.empty(); }
    const std::string& provider_id() const { return provider_id_; }
    std::size_t dimension() const { return dimension_; }

    bool contains(std::string_view name) const { return specs_.find(std::string(name)) != specs_.end(); }

    /// Exact, case-sensitive match.
    std::optional<NodeSpec> lookup(std::string_view name) const {
        auto it = specs_.find(std::string(name));
        if (it == specs_.end()) return std::nullopt;
        return it->second;
    }
    const NodeSpec* find(std::string_view name) const {
        auto it = specs_.find(std::string(name));
        return it == specs_.end() ? nullptr : &it->second;
    }
    const Embedding* embedding(std::string_view name) const {
        auto it = embeddings_.find(std::string(name));
        return it == embeddings_.end() ? nullptr : &it->second;
    }

    std::set<std::string> names() const {
        std::set<std::string> out;
        for (const auto& [name, _] : specs_) out.insert(name);
        return out;
    }
    /// Specs in ascending name order.
    std::vector<NodeSpec> specs() const {
        std::vector<NodeSpec> out;
        for (const auto& [_, s] : specs_) out.push_back(s);
        return out;
    }

    /// The min(k, size) most similar names, by descending score then ascending name.
    std::vector<ScoredName> top_k(std::string_view query, std::size_t k, const EmbeddingProvider& provider) const {
        if (k == 0) throw Error(ErrorCode::InvalidArgument, "k", "k must be at least 1");
        if (empty()) throw Error(ErrorCode::EmptyBase, "", "node base is empty");
        if (provider.id() != provider_id_)
            throw Error(ErrorCode::ProviderMismatch, provider.id(), "base was embedded with " + provider_id_);
        Embedding q;
        try {
            q = provider.embed(query);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& ex) {
            throw Error(ErrorCode::EmbeddingFailure, std::string(query), ex.what());
        }
        std::vector<ScoredName> scored;
        scored.reserve(embeddings_.size());
        for (const auto& [name, e] : embeddings_) scored.push_back({name, similarity(q, e)});
        const auto n = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                          [](const ScoredName& a, const ScoredName& b) {
                              if (a.score != b.score) return a.score > b.score;
                              return a.node_name < b.node_name;
                          });
        scored.resize(n);
        return scored;
    }

private:
    std::string provider_id_;
    std::size_t dimension_ = 0;
    std::map<std::string, NodeSpec> specs_;
    std::map<std::string, Embedding> embeddings_;
};

/// Snapshot text (specs only, ascending name order). ingest of this text
/// reproduces every spec field.
inline std::string emit_snapshot(const NodeBase& base) {
    json arr = json::array();
    for (const auto& s : base.specs()) arr.push_back(spec_to_json(s));
    return arr.dump(2);
}

}  // namespace comfyflow
