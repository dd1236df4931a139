#include <catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <sstream>
#include <thread>

#include "comfyflow/cli.hpp"
#include "fixtures.hpp"

using namespace comfyflow;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

struct Sandbox {
    fs::path dir;
    std::map<std::string, std::string> env;

    Sandbox() {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("comfyflow_cli_" + std::to_string(rd()));
        fs::create_directories(dir);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        detail::write_file_atomic(dir / name, text);
        return path(name);
    }
    std::string read(const std::string& name) const { return detail::read_file(dir / name); }

    Result run(std::vector<std::string> args) const {
        std::ostringstream out, err;
        const auto code = cli::run(args, out, err, [this](const std::string& k) -> std::optional<std::string> {
            auto it = env.find(k);
            if (it == env.end()) return std::nullopt;
            return it->second;
        });
        return {code, out.str(), err.str()};
    }
};

std::string data_path(const std::string& name) { return std::string(COMFYFLOW_TEST_DATA) + "/" + name; }

std::string specs_text(const std::vector<NodeSpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) arr.push_back(spec_to_json(s));
    return arr.dump(2);
}

}  // namespace

TEST_CASE("convert to diagram matches the golden diagram", "[cli][convert]") {
    Sandbox sb;
    const auto r = sb.run({"convert", "--to", "diagram", "--in", data_path("txt2img_workflow.json"), "--out", sb.path("d.json")});
    CHECK(r.code == 0);
    CHECK(parse_diagram(sb.read("d.json")) == parse_diagram(fixtures::data_file("txt2img_diagram.json")));

    const auto nb = data_path("fewshot20_specs.json");
    REQUIRE(sb.run({"convert", "--to", "workflow", "--in", sb.path("d.json"), "--out", sb.path("g.json"), "--nodebase", nb}).code == 0);
    const auto g = parse_graph_workflow(sb.read("g.json"));
    CHECK(g.nodes.size() == 7);
    REQUIRE(sb.run({"convert", "--to", "diagram", "--in", sb.path("g.json"), "--out", sb.path("d2.json")}).code == 0);
    CHECK(sb.read("d2.json") == sb.read("d.json"));

    const auto no_base = sb.run({"convert", "--to", "workflow", "--in", sb.path("d.json"), "--out", sb.path("x.json")});
    CHECK(no_base.code == 2);
    CHECK(no_base.err.find("node base") != std::string::npos);
    CHECK_FALSE(fs::exists(sb.path("x.json")));
}

TEST_CASE("clean writes the graph and the report", "[cli][clean]") {
    Sandbox sb;
    auto r = sb.run({"clean", "--in", data_path("txt2img_workflow.json"), "--out", sb.path("c.json"), "--report", sb.path("r.json")});
    CHECK(r.code == 0);
    const auto g = parse_graph_workflow(sb.read("c.json"));
    CHECK(g.nodes.size() == 7);
    const auto rep = json::parse(sb.read("r.json"));
    CHECK(rep["removed_nodes"].size() == 2);

    r = sb.run({"clean", "--in", data_path("txt2img_workflow.json"), "--in", data_path("minimal_workflow.json"), "--out",
                sb.path("batch"), "--report", sb.path("rb.json")});
    CHECK(r.code == 0);
    CHECK(fs::exists(sb.path("batch/minimal_workflow.json")));
    CHECK(json::parse(sb.read("rb.json")).size() == 2);
}

TEST_CASE("validate exits 1 on a cyclic workflow", "[cli][validate]") {
    Sandbox sb;
    const auto nb = data_path("fewshot20_specs.json");
    auto r = sb.run({"validate", "--in", data_path("cyclic_diagram.json"), "--nodebase", nb});
    CHECK(r.code == 1);
    CHECK(r.out.find("CycleDetected") != std::string::npos);
    CHECK(validation_report_from_json(json::parse(r.out)).issues.size() == 1);

    r = sb.run({"validate", "--in", data_path("txt2img_diagram.json"), "--nodebase", nb});
    CHECK(r.code == 0);
    r = sb.run({"validate", "--in", data_path("txt2img_diagram.json"), "--nodebase", nb, "--strict-types"});
    CHECK(r.code == 0);
}

TEST_CASE("score prints rewards and advantages", "[cli][score]") {
    Sandbox sb;
    auto r = sb.run({"score", "--rewards", "1,1,1"});
    CHECK(r.code == 0);
    CHECK(r.out == "0 0 0\n");
    r = sb.run({"score", "--rewards", "1, 0, 1, 0, 0"});
    CHECK(r.out == "1.224744871 -0.8164965809 1.224744871 -0.8164965809 -0.8164965809\n");
    CHECK(sb.run({"score", "--rewards", "1,x"}).code == 2);
    CHECK(sb.run({"score", "--rewards", "0.5"}).code == 2);

    const auto nb = data_path("fewshot20_specs.json");
    r = sb.run({"score", "--diagram", data_path("txt2img_diagram.json"), "--nodebase", nb});
    CHECK(r.out == "1\n");
    sb.write("bad.json", R"([["KSampler_0","LATENT","MagicDecoder_0","samples"]])");
    r = sb.run({"score", "--diagram", sb.path("bad.json"), "--nodebase", nb});
    CHECK(r.code == 0);
    CHECK(r.out == "0\n");
    CHECK(r.err.find("MagicDecoder") != std::string::npos);
}

TEST_CASE("usage errors exit 2 with a synopsis", "[cli][usage]") {
    Sandbox sb;
    for (const auto& args : std::vector<std::vector<std::string>>{
             {},
             {"frobnicate"},
             {"score"},
             {"score", "--rewards", "1", "--diagram", "x"},
             {"generate", "--desc", "x", "--backend", "gpt", "--out", "y"},
             {"validate", "--in", "x"},
             {"nodebase"}}) {
        const auto r = sb.run(args);
        CHECK(r.code == 2);
        CHECK(r.err.find("error:") != std::string::npos);
        CHECK(r.err.find("Usage:") != std::string::npos);
    }
    const auto help = sb.run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("convert") != std::string::npos);
    CHECK(sb.run({"validate", "--in", sb.path("missing.json"), "--nodebase", sb.path("missing.json")}).code == 2);
}

TEST_CASE("config file, flags and environment layer in order", "[cli][config]") {
    Sandbox sb;
    const auto nb = data_path("fewshot20_specs.json");
    const auto diagram = data_path("txt2img_diagram.json");
    sb.write("good.json", json{{"nodebase_path", nb}}.dump());
    sb.write("missing.json", json{{"nodebase_path", sb.path("nope.json")}}.dump());

    CHECK(sb.run({"score", "--diagram", diagram, "--config", sb.path("good.json")}).code == 0);
    CHECK(sb.run({"score", "--diagram", diagram, "--config", sb.path("missing.json")}).code == 2);
    CHECK(sb.run({"score", "--diagram", diagram, "--config", sb.path("missing.json"), "--nodebase", nb}).code == 0);

    Sandbox env_sb;
    env_sb.env["COMFYFLOW_NODEBASE_PATH"] = sb.path("nope.json");
    CHECK(env_sb.run({"score", "--diagram", diagram, "--nodebase", nb}).code == 2);
    env_sb.env["COMFYFLOW_NODEBASE_PATH"] = nb;
    CHECK(env_sb.run({"score", "--diagram", diagram, "--config", sb.path("missing.json")}).code == 0);

    env_sb.env["COMFYFLOW_REFINE_K"] = "0";
    auto r = env_sb.run({"score", "--diagram", diagram});
    CHECK(r.code == 2);
    CHECK(r.err.find("refine_k") != std::string::npos);
    env_sb.env.erase("COMFYFLOW_REFINE_K");

    sb.write("typo.json", R"({"nodebase": "x"})");
    CHECK(sb.run({"score", "--rewards", "1", "--config", sb.path("typo.json")}).code == 2);
    sb.write("badtype.json", R"({"parallelism": {"bench": "eight"}})");
    CHECK(sb.run({"score", "--rewards", "1", "--config", sb.path("badtype.json")}).code == 2);
}

TEST_CASE("refine runs the outpainting example with a scripted LLM", "[cli][refine]") {
    Sandbox sb;
    const auto nb = sb.write("specs.json", specs_text(fixtures::outpaint_specs()));
    sb.write("script.json", json{{"default", "{\"candidate_node_name\": \"LogicUtil_ReplaceString\"}"}}.dump());
    sb.env["COMFYFLOW_LLM_SCRIPT"] = sb.path("script.json");
    const auto r = sb.run({"refine", "--in", data_path("outpaint_diagram.json"), "--desc", "outpaint the photo",
                           "--nodebase", nb, "--out", sb.path("refined.json")});
    CHECK(r.code == 0);
    const auto out = json::parse(r.out);
    CHECK(out["replacements"][0]["chosen"] == "LogicUtil_ReplaceString");
    const auto refined = parse_diagram(sb.read("refined.json"));
    CHECK(refined.type_names().contains("LogicUtil_ReplaceString"));
    CHECK_FALSE(refined.type_names().contains("ReplaceString"));

    sb.write("script.json", json{{"default", "{\"candidate_node_name\": \"Nope\"}"}}.dump());
    CHECK(sb.run({"refine", "--in", data_path("outpaint_diagram.json"), "--desc", "x", "--nodebase", nb, "--out",
                  sb.path("refined2.json")})
              .code == 1);

    sb.env.erase("COMFYFLOW_LLM_SCRIPT");
    CHECK(sb.run({"refine", "--in", data_path("outpaint_diagram.json"), "--desc", "x", "--nodebase", nb, "--out",
                  sb.path("refined3.json")})
              .code == 2);
}

TEST_CASE("generate writes deterministic diagrams", "[cli][generate]") {
    Sandbox sb;
    const auto nb = data_path("fewshot20_specs.json");
    const auto corpus = data_path("fewshot20.jsonl");
    const std::vector<std::string> args{"generate", "--desc", "upscale an old photograph", "--backend", "nn",
                                        "--fewshot", corpus, "--nodebase", nb, "--out"};
    auto a = args;
    a.push_back(sb.path("a.json"));
    auto b = args;
    b.push_back(sb.path("b.json"));
    REQUIRE(sb.run(a).code == 0);
    REQUIRE(sb.run(b).code == 0);
    CHECK(sb.read("a.json") == sb.read("b.json"));
    const auto examples = load_fewshot(fixtures::data_file("fewshot20.jsonl"));
    const auto it = std::find_if(examples.begin(), examples.end(), [](const FewShotExample& e) {
        return e.description == "restore and upscale an old family photograph";
    });
    REQUIRE(it != examples.end());
    CHECK(parse_diagram(sb.read("a.json")) == it->diagram);

    CHECK(sb.run({"generate", "--desc", "x", "--backend", "nn", "--nodebase", nb, "--out", sb.path("c.json")}).code == 2);

    sb.write("script.json", json{{"default", "no diagram today"}}.dump());
    sb.env["COMFYFLOW_LLM_SCRIPT"] = sb.path("script.json");
    const auto r = sb.run({"generate", "--desc", "x", "--backend", "llm", "--nodebase", nb, "--out", sb.path("d.json")});
    CHECK(r.code == 1);
    CHECK(r.err.find("after 3 attempts") != std::string::npos);
    sb.env["COMFYFLOW_MAX_ATTEMPTS"] = "1";
    CHECK(sb.run({"generate", "--desc", "x", "--backend", "llm", "--nodebase", nb, "--out", sb.path("d.json")})
              .err.find("after 1 attempts") != std::string::npos);
}

TEST_CASE("bench runs offline and reports percentages", "[cli][bench]") {
    Sandbox sb;
    const auto r = sb.run({"bench", "--dataset", data_path("echo_dataset.jsonl"), "--backend", "nn", "--fewshot",
                           data_path("fewshot20.jsonl"), "--nodebase", data_path("fewshot20_specs.json"), "--out",
                           sb.path("report.json")});
    CHECK(r.code == 0);
    CHECK(r.out.find("FV 100.0%  PA 100.0%  PIA n/a") != std::string::npos);
    const auto rep = report_parse(sb.read("report.json"));
    CHECK(rep.overall.fv == 20);
    CHECK(rep.overall.pa == 20);
    CHECK(rep.overall.pnd == 21);
}

TEST_CASE("nodebase ingest, merge and query", "[cli][nodebase]") {
    Sandbox sb;
    sb.write("a.json", R"([{"node_name": "KSampler", "input_names": ["model"], "output_names": ["LATENT"]},
                           {"node_name": "VAEDecode", "input_names": ["samples"], "output_names": ["IMAGE"]}])");
    sb.write("b.json", R"([{"node_name": "KSampler", "input_names": ["model", "seed"], "output_names": ["LATENT"]},
                           {"node_name": "SaveImage", "input_names": ["images"], "output_names": []}])");
    CHECK(sb.run({"nodebase", "ingest", "--in", sb.path("a.json"), "--out", sb.path("sa.json")}).out == "2 specs\n");
    CHECK(sb.run({"nodebase", "merge", "--base", sb.path("a.json"), "--newer", sb.path("b.json"), "--out",
                  sb.path("m.json")})
              .code == 0);
    const auto merged = parse_specs(sb.read("m.json"));
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].input_names == std::vector<std::string>{"model", "seed"});

    const auto q = sb.run({"nodebase", "query", "--nodebase", sb.path("m.json"), "--name", "KSampler", "--k", "2"});
    CHECK(q.code == 0);
    const auto hits = json::parse(q.out);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0]["node_name"] == "KSampler");

    sb.write("dup.json", R"([{"node_name": "A", "input_names": [], "output_names": []},
                             {"node_name": "A", "input_names": [], "output_names": []}])");
    CHECK(sb.run({"nodebase", "ingest", "--in", sb.path("dup.json"), "--out", sb.path("x.json")}).code == 1);
}

TEST_CASE("submit maps server outcomes to exit codes", "[cli][submit]") {
    httplib::Server stub;
    stub.Post("/prompt", [](const httplib::Request& req, httplib::Response& res) {
        if (req.body.find("SaveImage") != std::string::npos) res.set_content(R"({"prompt_id":"p9"})", "application/json");
        else {
            res.status = 400;
            res.set_content(R"({"error":"bad"})", "application/json");
        }
    });
    const int port = stub.bind_to_any_port("127.0.0.1");
    std::thread server([&] { stub.listen_after_bind(); });
    stub.wait_until_ready();

    Sandbox sb;
    sb.env["COMFYFLOW_SERVER_BASE_URL"] = "http://127.0.0.1:" + std::to_string(port);
    const auto nb = data_path("fewshot20_specs.json");
    auto r = sb.run({"submit", "--in", data_path("txt2img_diagram.json"), "--nodebase", nb});
    CHECK(r.code == 0);
    CHECK(r.out == "{\"prompt_id\":\"p9\"}\n");
    r = sb.run({"submit", "--in", data_path("cyclic_diagram.json"), "--nodebase", nb});
    CHECK(r.code == 1);

    stub.stop();
    server.join();
    r = sb.run({"submit", "--in", data_path("txt2img_diagram.json"), "--nodebase", nb});
    CHECK(r.code == 3);

    sb.env.erase("COMFYFLOW_SERVER_BASE_URL");
    CHECK(sb.run({"submit", "--in", data_path("txt2img_diagram.json"), "--nodebase", nb}).code == 2);
}
