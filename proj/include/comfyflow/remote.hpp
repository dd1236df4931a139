#pragma once

// HTTP-backed implementations of the LLM, embedding and server interfaces.

#include <chrono>
#include <string>
#include <string_view>

#include "comfyflow/executor.hpp"
#include "comfyflow/llm.hpp"
#include "comfyflow/nodebase.hpp"
#include "httplib.h"

namespace comfyflow {

namespace detail {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // at least "/"
};

inline Endpoint split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        throw Error(ErrorCode::InvalidArgument, std::string(url), "URL needs a scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw Error(ErrorCode::InvalidArgument, std::string(url), "only http and https are supported");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https")
        throw Error(ErrorCode::InvalidArgument, std::string(url), "built without TLS support");
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

inline HttpReply post(const Endpoint& ep, const std::string& path, const std::string& body,
                      std::chrono::milliseconds timeout) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path, body, "application/json");
    if (!res) throw Error(ErrorCode::Transport, ep.origin + path, httplib::to_string(res.error()));
    return {res->status, res->body};
}

inline std::string join_path(const std::string& base, std::string_view suffix) {
    std::string out = base;
    if (!out.empty() && out.back() == '/') out.pop_back();
    return out + std::string(suffix);
}

}  // namespace detail

/// POST {model, prompt, temperature, top_p, max_tokens} -> {text}.
class RemoteLlmClient final : public LlmClient {
public:
    RemoteLlmClient(std::string url, std::string model, SamplingParams params = {},
                    std::chrono::milliseconds timeout = std::chrono::seconds(120))
        : ep_(detail::split_url(url)), model_(std::move(model)), params_(params), timeout_(timeout) {}

    std::string complete(std::string_view prompt) override {
        const json req = {{"model", model_},
                          {"prompt", prompt},
                          {"temperature", params_.temperature},
                          {"top_p", params_.top_p},
                          {"max_tokens", params_.max_tokens}};
        const auto reply = detail::post(ep_, ep_.path, req.dump(), timeout_);
        if (reply.status < 200 || reply.status >= 300)
            throw Error(ErrorCode::LlmFailure, ep_.origin, "HTTP " + std::to_string(reply.status) + ": " + reply.body);
        auto parsed = json::parse(reply.body, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string())
            throw Error(ErrorCode::LlmFailure, ep_.origin, "response lacks a text field");
        return parsed["text"].get<std::string>();
    }

private:
    detail::Endpoint ep_;
    std::string model_;
    SamplingParams params_;
    std::chrono::milliseconds timeout_;
};

/// POST {text, model} -> {vector: [D reals]}; a transport failure is retried once.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::string url, std::string model, std::size_t dimension,
                            std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : ep_(detail::split_url(url)), model_(std::move(model)), dim_(dimension), timeout_(timeout) {}

    std::string id() const override { return "remote:" + model_ + "/" + std::to_string(dim_); }
    std::size_t dimension() const override { return dim_; }

    Embedding embed(std::string_view text) const override {
        const json req = {{"text", text}, {"model", model_}};
        HttpReply reply;
        try {
            reply = detail::post(ep_, ep_.path, req.dump(), timeout_);
        } catch (const Error&) {
            reply = detail::post(ep_, ep_.path, req.dump(), timeout_);
        }
        if (reply.status >= 500) reply = detail::post(ep_, ep_.path, req.dump(), timeout_);
        if (reply.status < 200 || reply.status >= 300)
            throw Error(ErrorCode::EmbeddingFailure, std::string(text), "HTTP " + std::to_string(reply.status));
        auto parsed = json::parse(reply.body, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("vector") || !parsed["vector"].is_array())
            throw Error(ErrorCode::EmbeddingFailure, std::string(text), "response lacks a vector field");
        auto values = parsed["vector"].get<std::vector<double>>();
        if (values.size() != dim_)
            throw Error(ErrorCode::DimensionMismatch, std::string(text),
                        "expected " + std::to_string(dim_) + ", got " + std::to_string(values.size()));
        return Embedding::normalized(std::move(values));
    }

private:
    detail::Endpoint ep_;
    std::string model_;
    std::size_t dim_;
    std::chrono::milliseconds timeout_;
};

/// A ComfyUI server reached over HTTP; paths are appended to the base URL.
class ComfyServerClient final : public ServerClient {
public:
    explicit ComfyServerClient(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : ep_(detail::split_url(base_url)), timeout_(timeout) {}

    HttpReply post_json(const std::string& path, const std::string& body) override {
        return detail::post(ep_, detail::join_path(ep_.path, path), body, timeout_);
    }

private:
    detail::Endpoint ep_;
    std::chrono::milliseconds timeout_;
};

}  // namespace comfyflow
