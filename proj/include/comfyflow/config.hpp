#pragma once

// Tool configuration: a JSON tree with defaults, overlaid by a config file,
// then command-line flags, then COMFYFLOW_* environment variables.

#include <cctype>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/error.hpp"
#include "json.hpp"

namespace comfyflow {

using json = nlohmann::json;

struct LlmConfig {
    std::string endpoint;
    std::string model;
    // Path of a scripted reply table; takes precedence over endpoint.
    std::string script;
    double temperature = 0.95;
    double top_p = 0.7;
    int max_tokens = 8192;
};

struct EmbeddingConfig {
    std::string provider = "trigram";  // "trigram" or "remote"
    std::string endpoint;
    std::string model;
    std::size_t dimension = 256;
};

struct ParallelismConfig {
    std::size_t clean = 1;
    std::size_t bench = 8;
    std::size_t submit = 4;
};

struct Config {
    std::string nodebase_path;
    std::string prompts_dir;
    LlmConfig llm;
    EmbeddingConfig embedding;
    std::string server_url;
    ParallelismConfig parallelism;
    std::size_t refine_k = 5;
    std::size_t max_attempts = 3;
};

/// Looks up an environment variable; replaceable for tests.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

inline json default_config_tree() {
    const auto cores = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return {{"nodebase_path", ""},
            {"prompts_dir", ""},
            {"llm", {{"endpoint", ""}, {"model", ""}, {"script", ""}, {"temperature", 0.95}, {"top_p", 0.7}, {"max_tokens", 8192}}},
            {"embedding", {{"provider", "trigram"}, {"endpoint", ""}, {"model", ""}, {"dimension", 256}}},
            {"server", {{"base_url", ""}}},
            {"parallelism", {{"clean", cores}, {"bench", 8}, {"submit", 4}}},
            {"refine_k", 5},
            {"max_attempts", 3}};
}

namespace detail {

/// Copies `patch` leaves onto `tree`, rejecting keys and types the defaults do not have.
inline void overlay(json& tree, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw Error(ErrorCode::SchemaViolation, path.empty() ? "/" : path, "expected an object");
    for (const auto& [key, value] : patch.items()) {
        const auto here = path + "/" + key;
        auto it = tree.find(key);
        if (it == tree.end()) throw Error(ErrorCode::SchemaViolation, here, "unknown configuration key");
        if (it->is_object()) {
            overlay(*it, value, here);
        } else if (it->is_string()) {
            if (!value.is_string()) throw Error(ErrorCode::SchemaViolation, here, "expected a string");
            *it = value;
        } else if (it->is_number_integer()) {
            if (!value.is_number_integer()) throw Error(ErrorCode::SchemaViolation, here, "expected an integer");
            *it = value;
        } else {
            if (!value.is_number()) throw Error(ErrorCode::SchemaViolation, here, "expected a number");
            *it = value.get<double>();
        }
    }
}

/// COMFYFLOW_<PATH> for every leaf, path segments upper-cased and joined by '_'
/// (llm.endpoint -> COMFYFLOW_LLM_ENDPOINT).
inline void overlay_env(json& tree, const EnvLookup& env, const std::string& prefix) {
    for (auto& [key, value] : tree.items()) {
        std::string name = prefix + "_";
        for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (value.is_object()) {
            overlay_env(value, env, name);
            continue;
        }
        const auto v = env(name);
        if (!v) continue;
        try {
            if (value.is_string()) value = *v;
            else if (value.is_number_integer()) {
                std::size_t used = 0;
                const auto n = std::stoll(*v, &used);
                if (used != v->size()) throw std::invalid_argument("trailing characters");
                value = n;
            } else {
                std::size_t used = 0;
                const auto x = std::stod(*v, &used);
                if (used != v->size()) throw std::invalid_argument("trailing characters");
                value = x;
            }
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidArgument, name, "cannot read '" + *v + "' as a number");
        }
    }
}

inline std::size_t positive(const json& tree, const json::json_pointer& p) {
    const auto v = tree.at(p).get<long long>();
    if (v < 1) throw Error(ErrorCode::InvalidArgument, p.to_string(), "must be at least 1");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Builds the effective configuration. `flags` holds the overrides given on the
/// command line, in the same shape as the file.
inline Config resolve_config(const std::optional<std::string>& config_text, const json& flags, const EnvLookup& env) {
    auto tree = default_config_tree();
    if (config_text) {
        const auto parsed = json::parse(*config_text, nullptr, false);
        if (parsed.is_discarded()) throw Error(ErrorCode::MalformedJson, "config", "configuration is not valid JSON");
        detail::overlay(tree, parsed, "");
    }
    if (!flags.is_null()) detail::overlay(tree, flags, "");
    detail::overlay_env(tree, env, "COMFYFLOW");

    using P = json::json_pointer;
    Config c;
    c.nodebase_path = tree["nodebase_path"];
    c.prompts_dir = tree["prompts_dir"];
    c.llm.endpoint = tree["llm"]["endpoint"];
    c.llm.model = tree["llm"]["model"];
    c.llm.script = tree["llm"]["script"];
    c.llm.temperature = tree["llm"]["temperature"];
    c.llm.top_p = tree["llm"]["top_p"];
    c.llm.max_tokens = static_cast<int>(detail::positive(tree, P("/llm/max_tokens")));
    if (c.llm.temperature < 0) throw Error(ErrorCode::InvalidArgument, "/llm/temperature", "must not be negative");
    if (c.llm.top_p <= 0 || c.llm.top_p > 1) throw Error(ErrorCode::InvalidArgument, "/llm/top_p", "must be in (0, 1]");
    c.embedding.provider = tree["embedding"]["provider"];
    if (c.embedding.provider != "trigram" && c.embedding.provider != "remote")
        throw Error(ErrorCode::InvalidArgument, "/embedding/provider", "expected trigram or remote");
    c.embedding.endpoint = tree["embedding"]["endpoint"];
    c.embedding.model = tree["embedding"]["model"];
    c.embedding.dimension = detail::positive(tree, P("/embedding/dimension"));
    c.server_url = tree["server"]["base_url"];
    c.parallelism.clean = detail::positive(tree, P("/parallelism/clean"));
    c.parallelism.bench = detail::positive(tree, P("/parallelism/bench"));
    c.parallelism.submit = detail::positive(tree, P("/parallelism/submit"));
    c.refine_k = detail::positive(tree, P("/refine_k"));
    c.max_attempts = detail::positive(tree, P("/max_attempts"));
    return c;
}

}  // namespace comfyflow
