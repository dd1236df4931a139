#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "comfyflow/detail/io.hpp"
#include "json.hpp"

namespace comfyflow::detail {

// Pulls a JSON value out of free-form model output. Tried in order: the first
// ``` fence (an optional language tag such as `json` is skipped), the whole
// text, then the widest {...} and [...] spans.
inline std::optional<nlohmann::json> extract_json(std::string_view text) {
    std::vector<std::string_view> candidates;
    if (auto open = text.find("```"); open != std::string_view::npos) {
        auto start = open + 3;
        while (start < text.size() && std::isalpha(static_cast<unsigned char>(text[start]))) ++start;
        const auto close = text.find("```", start);
        candidates.push_back(text.substr(start, close == std::string_view::npos ? std::string_view::npos : close - start));
    }
    candidates.push_back(text);
    for (auto [l, r] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
        const auto b = text.find(l);
        const auto e = text.rfind(r);
        if (b != std::string_view::npos && e != std::string_view::npos && e > b) candidates.push_back(text.substr(b, e - b + 1));
    }
    for (auto c : candidates) {
        c = trim(c);
        if (c.empty()) continue;
        auto parsed = nlohmann::json::parse(c, nullptr, false);
        if (!parsed.is_discarded()) return parsed;
    }
    return std::nullopt;
}

}  // namespace comfyflow::detail
