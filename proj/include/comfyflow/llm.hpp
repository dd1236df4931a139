#pragma once

#include <algorithm>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comfyflow/error.hpp"
#include "comfyflow/ir.hpp"

namespace comfyflow {

/// Forwarded to remote backends.
struct SamplingParams {
    double temperature = 0.95;
    double top_p = 0.7;
    int max_tokens = 8192;
};

/// Text in, text out. Implementations must be safe to call concurrently.
/// Transport problems surface as Error(Transport); anything else the backend
/// refuses to answer as Error(LlmFailure).
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(std::string_view prompt) = 0;
};

/// Deterministic stand-in for a model: a prompt -> reply table.
///
/// Rules are tried in order. An exact rule matches the whole prompt, a
/// contains rule any prompt containing its pattern. A rule with several
/// replies hands them out in sequence and then repeats the last one. A rule
/// may fail its first `fail_first` matches with a Transport error. Prompts
/// that match nothing get `default_reply`, or LlmFailure when there is none.
class ScriptedLlm final : public LlmClient {
public:
    enum class Match { Exact, Contains };

    struct Rule {
        Match match = Match::Contains;
        std::string pattern;
        std::vector<std::string> replies;
        std::size_t fail_first = 0;
    };

    ScriptedLlm() = default;
    explicit ScriptedLlm(std::optional<std::string> default_reply) : default_(std::move(default_reply)) {}
    ScriptedLlm(ScriptedLlm&& other) noexcept {
        std::lock_guard lock(other.mu_);
        rules_ = std::move(other.rules_);
        default_ = std::move(other.default_);
        calls_ = std::move(other.calls_);
    }

    ScriptedLlm& on_exact(std::string prompt, std::string reply) {
        return add({Match::Exact, std::move(prompt), {std::move(reply)}, 0});
    }
    ScriptedLlm& on_contains(std::string needle, std::string reply) {
        return add({Match::Contains, std::move(needle), {std::move(reply)}, 0});
    }
    ScriptedLlm& on_contains(std::string needle, std::vector<std::string> replies) {
        return add({Match::Contains, std::move(needle), std::move(replies), 0});
    }
    ScriptedLlm& add(Rule rule) {
        if (rule.replies.empty() && rule.fail_first == 0)
            throw Error(ErrorCode::InvalidArgument, rule.pattern, "scripted rule needs a reply");
        std::lock_guard lock(mu_);
        rules_.push_back({std::move(rule), 0});
        return *this;
    }
    ScriptedLlm& set_default(std::optional<std::string> reply) {
        std::lock_guard lock(mu_);
        default_ = std::move(reply);
        return *this;
    }

    /// {"default": "...", "rules": [{"match": "exact"|"contains", "pattern": "...",
    ///  "reply": "..." | "replies": [...], "fail_first": n}]}
    static ScriptedLlm from_json(const json& j) {
        if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "", "script must be an object");
        ScriptedLlm s;
        if (auto it = j.find("default"); it != j.end() && !it->is_null()) s.default_ = it->get<std::string>();
        const auto rules = j.value("rules", json::array());
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const auto& r = rules[i];
            const auto path = "/rules/" + std::to_string(i);
            Rule rule;
            const auto kind = r.value("match", std::string("contains"));
            if (kind == "exact") rule.match = Match::Exact;
            else if (kind == "contains") rule.match = Match::Contains;
            else throw Error(ErrorCode::SchemaViolation, path + "/match", "expected exact or contains");
            if (!r.contains("pattern") || !r["pattern"].is_string())
                throw Error(ErrorCode::SchemaViolation, path + "/pattern", "missing pattern");
            rule.pattern = r["pattern"].get<std::string>();
            if (r.contains("reply")) rule.replies.push_back(r["reply"].get<std::string>());
            if (r.contains("replies")) rule.replies = r["replies"].get<std::vector<std::string>>();
            rule.fail_first = r.value("fail_first", std::size_t{0});
            s.add(std::move(rule));
        }
        return s;
    }

    std::string complete(std::string_view prompt) override {
        std::lock_guard lock(mu_);
        calls_.emplace_back(prompt);
        for (auto& [rule, hits] : rules_) {
            const bool matched = rule.match == Match::Exact ? prompt == rule.pattern
                                                            : prompt.find(rule.pattern) != std::string_view::npos;
            if (!matched) continue;
            const auto n = hits++;
            if (n < rule.fail_first) throw Error(ErrorCode::Transport, "scripted", "injected failure");
            if (rule.replies.empty()) throw Error(ErrorCode::Transport, "scripted", "rule always fails");
            return rule.replies[std::min(n - rule.fail_first, rule.replies.size() - 1)];
        }
        if (default_) return *default_;
        throw Error(ErrorCode::LlmFailure, "scripted", "no scripted reply for prompt");
    }

    std::vector<std::string> calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }
    std::size_t call_count() const {
        std::lock_guard lock(mu_);
        return calls_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<std::pair<Rule, std::size_t>> rules_;
    std::optional<std::string> default_;
    std::vector<std::string> calls_;
};

}  // namespace comfyflow
