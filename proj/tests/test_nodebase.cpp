#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "comfyflow/detail/io.hpp"
#include "comfyflow/nodebase.hpp"
#include "oracles.hpp"

using namespace comfyflow;

namespace {

std::string data_file(const char* name) { return detail::read_file(std::string(COMFYFLOW_TEST_DATA) + "/" + name); }

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected comfyflow::Error");
    return ErrorCode::Io;
}

struct FailingProvider : EmbeddingProvider {
    std::string id() const override { return "failing/4"; }
    std::size_t dimension() const override { return 4; }
    Embedding embed(std::string_view text) const override {
        if (text == "Bad") throw std::runtime_error("service said no");
        return Embedding::normalized({1, 0, 0, 0});
    }
};

}  // namespace

TEST_CASE("ingest builds a base from candidate-node records", "[nodebase]") {
    const TrigramEmbedder emb;
    const auto base = NodeBase::ingest(
        R"([{"node_name":"String Replace","input_names":["Text","Pattern","Replace_With","Mode"],"output_names":["TEXT"]}])",
        emb);
    CHECK(base.size() == 1);
    CHECK(base.provider_id() == "trigram-fnv1a/256");
    CHECK(base.dimension() == 256);

    CHECK(NodeBase::ingest("[]", emb).empty());
    CHECK(code_of([&] {
              NodeBase::ingest(R"([{"node_name":"X","input_names":[],"output_names":[]},
                                  {"node_name":"X","input_names":["a"],"output_names":[]}])",
                               emb);
          }) == ErrorCode::DuplicateNodeName);
    CHECK(code_of([&] { NodeBase::ingest("[{", emb); }) == ErrorCode::MalformedJson);
    CHECK(code_of([&] {
              NodeBase::ingest(R"([{"node_name":"X","input_names":["a"],"input_types":[],"output_names":[]}])", emb);
          }) == ErrorCode::SchemaViolation);
    CHECK(code_of([&] {
              NodeBase::ingest(R"([{"node_name":"Bad","input_names":[],"output_names":[]}])", FailingProvider{});
          }) == ErrorCode::EmbeddingFailure);
}

TEST_CASE("similarity", "[nodebase]") {
    const auto a = Embedding::normalized({1, 0});
    const auto b = Embedding::normalized({0, 1});
    CHECK(similarity(a, a) == Catch::Approx(1.0).margin(1e-12));
    CHECK(similarity(a, b) == Catch::Approx(0.0).margin(1e-12));
    CHECK(similarity(Embedding::normalized({0.6, 0.8}), a) == Catch::Approx(0.6).margin(1e-12));
    CHECK(code_of([&] { similarity(a, Embedding::normalized({1, 0, 0})); }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([] { Embedding::normalized({0, 0}); }) == ErrorCode::EmbeddingFailure);
}

TEST_CASE("stored embeddings are unit length and similarity is symmetric", "[nodebase][property]") {
    const TrigramEmbedder emb;
    const auto base = NodeBase::from_specs(oracle::synthetic_specs(300, 4), emb, 4);
    std::vector<const Embedding*> all;
    for (const auto& name : base.names()) {
        const auto* e = base.embedding(name);
        REQUIRE(e->dimension() == 256);
        double sq = 0;
        for (double v : e->values()) sq += v * v;
        REQUIRE(std::abs(std::sqrt(sq) - 1.0) < 1e-9);
        REQUIRE(std::abs(similarity(*e, *e) - 1.0) < 1e-12);
        all.push_back(e);
    }
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        const auto* x = all[rng() % all.size()];
        const auto* y = all[rng() % all.size()];
        REQUIRE(std::abs(similarity(*x, *y) - similarity(*y, *x)) < 1e-12);
        REQUIRE(std::abs(similarity(*x, *y) - oracle::cosine(x->values(), y->values())) < 1e-12);
    }
}

TEST_CASE("top_k over the outpainting candidates", "[nodebase][topk]") {
    const TrigramEmbedder emb;
    const auto base = NodeBase::ingest(data_file("outpaint_candidates.json"), emb);
    REQUIRE(base.size() == 5);
    const auto hits = base.top_k("ReplaceString", 5, emb);
    REQUIRE(hits.size() == 5);
    std::set<std::string> names;
    for (const auto& h : hits) names.insert(h.node_name);
    CHECK(names.contains("LogicUtil_ReplaceString"));
    CHECK(names.contains("String Replace"));
    for (std::size_t i = 1; i < hits.size(); ++i) CHECK(hits[i - 1].score >= hits[i].score);
    CHECK(base.top_k("ReplaceString", 50, emb).size() == 5);

    CHECK(code_of([&] { base.top_k("x", 0, emb); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { base.top_k("x", 1, TrigramEmbedder(64)); }) == ErrorCode::ProviderMismatch);
    CHECK(code_of([&] { NodeBase().top_k("x", 1, emb); }) == ErrorCode::EmptyBase);
}

TEST_CASE("top_k matches a brute-force full sort", "[nodebase][topk][property]") {
    const TrigramEmbedder emb;
    std::mt19937_64 rng(99);
    for (std::size_t n : {10, 100, 1000}) {
        const auto base = NodeBase::from_specs(oracle::synthetic_specs(n, static_cast<unsigned>(n)), emb);
        for (int q = 0; q < 20; ++q) {
            const auto query = oracle::synthetic_specs(1, static_cast<unsigned>(rng()))[0].node_name;
            for (std::size_t k : {std::size_t{1}, std::size_t{5}, n})
                REQUIRE(base.top_k(query, k, emb) == oracle::brute_top_k(base, query, k, emb));
        }
    }
}

TEST_CASE("lookup is exact and case-sensitive", "[nodebase]") {
    const TrigramEmbedder emb;
    const auto base = NodeBase::ingest(data_file("outpaint_candidates.json"), emb);
    const auto spec = base.lookup("LogicUtil_ReplaceString");
    REQUIRE(spec);
    CHECK(spec->input_names == std::vector<std::string>{"String", "Regex", "ReplaceWith"});
    CHECK(spec->output_names == std::vector<std::string>{"STRING"});
    CHECK_FALSE(base.lookup("NoSuchNode"));
    CHECK_FALSE(base.lookup("logicutil_replacestring"));
}

TEST_CASE("snapshot emit then ingest is lossless", "[nodebase]") {
    const TrigramEmbedder emb;
    const std::string text = R"([
      {"node_name":"KSampler","input_names":["model","positive","seed"],"output_names":["LATENT"],
       "input_types":["MODEL","CONDITIONING","INT"],"output_types":["LATENT"],
       "required_inputs":["model","positive"],"input_defaults":{"seed":0}},
      {"node_name":"Note","input_names":[],"output_names":[]}])";
    const auto base = NodeBase::ingest(text, emb);
    const auto again = NodeBase::ingest(emit_snapshot(base), emb);
    CHECK(again.specs() == base.specs());
    CHECK(emit_snapshot(again) == emit_snapshot(base));
    CHECK(base.lookup("KSampler")->is_required("positive"));
    CHECK_FALSE(base.lookup("KSampler")->is_required("seed"));
}

TEST_CASE("merge lets the newer snapshot win", "[nodebase]") {
    const TrigramEmbedder emb;
    const auto old_base = NodeBase::ingest(R"([{"node_name":"A","input_names":["x"],"output_names":[]},
                                               {"node_name":"B","input_names":[],"output_names":[]}])",
                                           emb);
    const auto new_base = NodeBase::ingest(R"([{"node_name":"A","input_names":["y"],"output_names":[]},
                                               {"node_name":"C","input_names":[],"output_names":[]}])",
                                           emb);
    const auto merged = old_base.merge(new_base);
    CHECK(merged.size() == 3);
    CHECK(merged.lookup("A")->input_names == std::vector<std::string>{"y"});
    const TrigramEmbedder other(32);
    CHECK(code_of([&] { old_base.merge(NodeBase::ingest(R"([{"node_name":"Z","input_names":[],"output_names":[]}])", other)); }) ==
          ErrorCode::ProviderMismatch);
}
