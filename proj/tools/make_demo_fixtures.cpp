// Regenerates fixtures/demo: a four-article dataset, two experiment configs,
// a baseline predictions file and the recorded model exchanges that let the
// demo experiments run in replay mode without a model server.
//
// The "models" here are canned answers. They are chosen to exercise every
// branch of the pipeline: clean JSON, JSON wrapped in reasoning, a wrong key,
// prose repaired by the structuring model, prose the structuring model cannot
// repair, and an acronym that only matches its gold spelling via matching.
//
// Usage: nerh_make_demo [output-dir]   (default: <source>/fixtures/demo)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerh/corpus.hpp"
#include "nerh/experiment.hpp"
#include "nerh/extraction.hpp"
#include "nerh/llm_gateway.hpp"
#include "nerh/matching.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool has(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

nerh::Dataset demo_dataset() {
  nerh::Dataset ds;
  ds.articles = {
      {"a01", "Shipping executive charged",
       "Federal prosecutors in New York charged Viktor Balan, a shipping executive, with laundering $40 million "
       "through Baltic Freight Ltd. The FBI said Balan moved the money with help from his accountant, Irina Sokol.",
       "case-balan", "en"},
      {"a02", "Riga accounts frozen",
       "A court in Riga froze accounts held by Nordic Trade Group after the Financial and Capital Market "
       "Commission found that its director, Anna Berzina, had approved payments to offshore companies. Berzina "
       "denied wrongdoing.",
       "case-nordic", "en"},
      {"a03", "Port bribery arrests",
       "Police arrested Marco Deluca and Tomas Weber in Milan on Tuesday. Both men are accused of bribing "
       "officials at the port authority to clear shipments for Alpine Metals SA, according to Europol.",
       "case-alpine", "en"},
      {"a04", std::nullopt,
       "No charges have been filed in the case. Investigators said the inquiry would continue into next year.",
       std::nullopt, "en"},
  };
  ds.gold = {
      {"a01", {"Viktor Balan", "Irina Sokol"}, {"Baltic Freight Ltd", "Federal Bureau of Investigations"}},
      {"a02", {"Anna Berzina"}, {"Nordic Trade Group", "Financial and Capital Market Commission"}},
      {"a03", {"Marco Deluca", "Tomas Weber"}, {"Alpine Metals SA", "Europol"}},
      {"a04", {}, {}},
  };
  for (auto& a : ds.articles) a.body = nerh::preprocess_text(a.body);
  return ds;
}

std::string article_of(const std::string& prompt) {
  if (has(prompt, "Viktor Balan, a shipping")) return "a01";
  if (has(prompt, "A court in Riga")) return "a02";
  if (has(prompt, "Police arrested Marco Deluca")) return "a03";
  if (has(prompt, "No charges have been filed")) return "a04";
  return "";
}

std::string extraction_answer(const std::string& model, const std::string& prompt) {
  const std::string id = article_of(prompt);
  const bool org = has(prompt, "Identify every organization");
  const bool cot = has(prompt, "Think step-by-step");
  const std::string reasoning = cot ? "Reading the article sentence by sentence, I noted each candidate name.\n\n" : "";

  if (model == "gemma2:9b") {
    static const std::map<std::string, std::string> ind{
        {"a01", R"({"individuals": ["Viktor Balan", "Irina Sokol"]})"},
        {"a02", R"({"individuals": ["Anna Berzina"]})"},
        {"a03", R"({"individuals": ["Marco Deluca"]})"},
        {"a04", R"({"individuals": []})"}};
    static const std::map<std::string, std::string> orgs{
        {"a01", R"({"organizations": ["Baltic Freight Ltd", "FBI"]})"},
        {"a02", R"({"organizations": ["Nordic Trade Group", "Financial and Capital Market Commission"]})"},
        {"a03", R"({"organizations": ["Alpine Metals SA", "Europol", "port authority"]})"},
        {"a04", R"({"organizations": []})"}};
    return reasoning + (org ? orgs : ind).at(id);
  }
  // llama3.1:8b: noisier formatting.
  static const std::map<std::string, std::string> ind{
      {"a01", R"({"persons": ["Viktor Balan", "Irina Sokol"]})"},
      {"a02", "The only individual named in the article is Anna Berzina."},
      {"a03", R"(```json
{"individuals": ["Marco Deluca", "Tomas Weber"]}
```)"},
      {"a04", R"({"individuals": []})"}};
  static const std::map<std::string, std::string> orgs{
      {"a01", R"({"organizations": ["Baltic Freight Ltd", "Federal Bureau of Investigations"]})"},
      {"a02", R"({"organizations": ["Nordic Trade Group"]})"},
      {"a03", "Organizations: Alpine Metals, Europol"},
      {"a04", R"({"organizations": []})"}};
  return reasoning + (org ? orgs : ind).at(id);
}

std::string structuring_answer(const std::string& prompt) {
  if (has(prompt, "Anna Berzina")) return R"({"individuals": ["Anna Berzina"]})";
  if (has(prompt, "\"persons\"")) return R"({"individuals": ["Viktor Balan", "Irina Sokol"]})";
  if (has(prompt, "Alpine Metals")) return "I am unable to format this list.";
  return R"({"individuals": []})";
}

std::vector<std::string> numbered_list(const std::string& prompt, const std::string& start, const std::string& end) {
  std::vector<std::string> out;
  auto b = prompt.find(start);
  if (b == std::string::npos) return out;
  b += start.size();
  const auto e = prompt.find(end, b);
  std::string block = prompt.substr(b, e == std::string::npos ? std::string::npos : e - b);
  std::size_t pos = 0;
  while (pos < block.size()) {
    auto nl = block.find('\n', pos);
    if (nl == std::string::npos) nl = block.size();
    const std::string line = block.substr(pos, nl - pos);
    const auto dot = line.find(". ");
    if (dot != std::string::npos) out.push_back(line.substr(dot + 2));
    pos = nl + 1;
  }
  return out;
}

std::string matching_answer(const std::string& prompt) {
  static const std::vector<std::pair<std::string, std::string>> aliases{
      {"Federal Bureau of Investigations", "FBI"}, {"Alpine Metals SA", "Alpine Metals"}};
  const auto gold = numbered_list(prompt, "List 1:\n", "\n\nList 2:");
  const auto pred = numbered_list(prompt, "List 2:\n", "\n\nAnswer:");
  const auto in = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  json pairs = json::array();
  for (const auto& g : gold)
    if (in(pred, g)) pairs.push_back({g, g});
  for (const auto& [g, p] : aliases)
    if (in(gold, g) && in(pred, p)) pairs.push_back({g, p});
  return pairs.dump();
}

class CannedModels final : public nerh::Transport {
 public:
  nerh::HttpResponse post_json(const std::string&, const std::string& body, std::chrono::milliseconds) override {
    const json req = json::parse(body);
    const std::string model = req.at("model");
    const std::string prompt = req.at("prompt");
    std::string answer;
    if (model == "qwen2:7b") answer = structuring_answer(prompt);
    else if (has(prompt, "List 1:")) answer = matching_answer(prompt);
    else answer = extraction_answer(model, prompt);
    return {200, json{{"model", model}, {"response", answer}, {"done", true}}.dump()};
  }
  nerh::HttpResponse get(const std::string&, std::chrono::milliseconds) override {
    return {200, R"({"models":[{"name":"gemma2:9b"},{"name":"llama3.1:8b"},{"name":"qwen2:7b"}]})"};
  }
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary);
  out << j.dump(2) << '\n';
}

json config_for(const std::string& cls, const json& variants) {
  return {{"dataset", "dataset.json"},
          {"entity_class", cls},
          {"models", {"gemma2:9b", "llama3.1:8b"}},
          {"structuring_model", "qwen2:7b"},
          {"matching_model", "gemma2:9b"},
          {"variants", variants},
          {"repetitions", 2},
          {"mode", "replay"},
          {"prompt_dir", "../../prompts"},
          {"fixture_dir", "exchanges"},
          {"output_dir", "runs"},
          {"baselines", {{{"path", "baseline_predictions.json"}, {"matching", {false, true}}}}}};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path(NERH_DEFAULT_PROMPT_DIR).parent_path() / "fixtures" / "demo";
  fs::create_directories(out);
  fs::remove_all(out / "exchanges");
  fs::remove_all(out / "runs");

  const nerh::Dataset ds = demo_dataset();
  nerh::save_dataset(ds, out / "dataset.json");

  // A conventional tagger's output: partial names and the acronym.
  const std::vector<nerh::Prediction> baseline{
      {"a01", nerh::EntityClass::Individual, {"Viktor Balan", "Balan", "Irina Sokol"}, "spacy-baseline"},
      {"a01", nerh::EntityClass::Organization, {"FBI", "Baltic Freight Ltd"}, "spacy-baseline"},
      {"a02", nerh::EntityClass::Individual, {"Anna Berzina", "Berzina"}, "spacy-baseline"},
      {"a02", nerh::EntityClass::Organization, {"Nordic Trade Group", "Riga"}, "spacy-baseline"},
      {"a03", nerh::EntityClass::Individual, {"Marco Deluca", "Tomas Weber"}, "spacy-baseline"},
      {"a03", nerh::EntityClass::Organization, {"Alpine Metals", "Europol", "Milan"}, "spacy-baseline"},
      {"a04", nerh::EntityClass::Individual, {}, "spacy-baseline"},
      {"a04", nerh::EntityClass::Organization, {}, "spacy-baseline"},
  };
  nerh::save_predictions(baseline, out / "baseline_predictions.json");

  write_json(out / "individual.json", config_for("individual", json::array({json::array(), {4}})));
  write_json(out / "organization.json", config_for("organization", json::array({json::array(), {1, 4, 5}})));

  auto models = std::make_shared<CannedModels>();
  for (const char* name : {"individual.json", "organization.json"}) {
    auto c = nerh::ExperimentConfig::load(out / name);
    c.mode = nerh::GatewayMode::Record;
    c.output_dir = out / "runs";
    c.run_id = "record";
    nerh::run_experiment(c, models);
  }
  fs::remove_all(out / "runs");

  // The bare alias pair on its own, for regression checks.
  nerh::GatewayOptions record;
  record.mode = nerh::GatewayMode::Record;
  record.fixture_dir = out / "exchanges";
  nerh::Gateway gateway(record, models);
  const auto prompts = nerh::PromptLibrary::load(NERH_DEFAULT_PROMPT_DIR);
  const std::vector<std::string> gold{"Federal Bureau of Investigations"};
  const std::vector<std::string> predicted{"FBI"};
  nerh::llm_match(gateway, prompts, gold, predicted, "gemma2:9b");

  std::cout << "demo fixtures written to " << out.string() << '\n';
  return 0;
}
