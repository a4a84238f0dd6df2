#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nerh/errors.hpp"
#include "nerh/experiment.hpp"
#include "test_support.hpp"

using namespace nerh;
using nerh::testing::contains;
using nerh::testing::ScriptedTransport;
using nerh::testing::TempDir;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Three articles: a clean answer with an alias, a prose answer the
// structuring model repairs, and an answer nothing can repair.
Dataset small_dataset() {
  Dataset ds;
  ds.articles = {{"a1", "One", "The FBI questioned John Smith.", std::nullopt, "en"},
                 {"a2", std::nullopt, "Ann Lee left ABC Ltd in March.", "case-2", "en"},
                 {"a3", std::nullopt, "Nobody of note appears in this piece about Interpol.", std::nullopt, "en"}};
  ds.gold = {{"a1", {"John Smith"}, {"Federal Bureau of Investigations"}},
             {"a2", {"Ann Lee"}, {"ABC Ltd"}},
             {"a3", {}, {"Interpol"}}};
  return ds;
}

std::string reply(const std::string& model, const std::string& prompt) {
  if (model == "qwen2:7b") {
    if (contains(prompt, "The organizations are ABC Ltd")) return R"({"organizations": ["ABC Ltd"]})";
    if (contains(prompt, "The individuals are Ann Lee")) return R"({"individuals": ["Ann Lee"]})";
    return "Sorry, I cannot help with that.";
  }
  if (model == "matcher") return R"([["Federal Bureau of Investigations", "FBI"]])";
  const bool org = contains(prompt, "\"organizations\"");
  if (contains(prompt, "The FBI questioned")) return org ? R"({"organizations": ["FBI"]})" : R"({"individuals": ["John Smith"]})";
  if (contains(prompt, "Ann Lee left")) return org ? "The organizations are ABC Ltd." : "The individuals are Ann Lee.";
  return "I am not sure.";
}

struct Setup {
  TempDir dir;
  ExperimentConfig config;
  std::shared_ptr<ScriptedTransport> transport =
      std::make_shared<ScriptedTransport>(reply, std::vector<std::string>{"m1", "m2", "qwen2:7b", "matcher"});

  explicit Setup(EntityClass cls, Dataset ds = small_dataset()) {
    save_dataset(ds, dir / "dataset.json");
    config.dataset = dir / "dataset.json";
    config.entity_class = cls;
    config.models = {"m1"};
    config.matching_model = "matcher";
    config.mode = GatewayMode::Record;
    config.prompt_dir = NERH_PROMPT_DIR;
    config.fixture_dir = dir / "exchanges";
    config.output_dir = dir / "runs";
    config.run_id = "r";
  }
};

}  // namespace

TEST_CASE("record then replay gives identical reports") {
  Setup s(EntityClass::Organization);
  const auto recorded = run_experiment(s.config, s.transport);
  REQUIRE(recorded.report.rows.size() == 1);
  const auto& row = recorded.report.rows[0];
  CHECK(row.matching_enabled);
  CHECK(row.total_iterations == 3);
  CHECK(row.json_errors == 1);
  CHECK(row.failure_percent == doctest::Approx(33.33));
  // a1: FBI renamed to the gold spelling; a2: ABC Ltd via structuring; a3: nothing.
  CHECK(row.precision == doctest::Approx(1.0));
  CHECK(row.recall == doctest::Approx(round_to(2.0 / 3, 3)));
  const int live_calls = s.transport->calls();

  s.config.mode = GatewayMode::Replay;
  std::vector<std::string> reports;
  for (const char* id : {"x", "y"}) {
    s.config.run_id = id;
    const auto art = run_experiment(s.config);
    reports.push_back(slurp(art.run_dir / "report.md"));
    CHECK(art.report.rows == recorded.report.rows);
  }
  CHECK(reports[0] == reports[1]);
  CHECK(s.transport->calls() == live_calls);
  CHECK(contains(reports[0], "# Organization identification results"));
  CHECK(contains(reports[0], "33.33%"));

  // The matches file records the alias pair.
  const json matches = json::parse(slurp(s.dir / "runs" / "x" / "matches.json"));
  bool saw_alias = false;
  for (const auto& m : matches)
    for (const auto& p : m["pairs"]) saw_alias = saw_alias || (p[0] == "Federal Bureau of Investigations" && p[1] == "FBI");
  CHECK(saw_alias);
}

TEST_CASE("json error counts agree with the predictions file") {
  Setup s(EntityClass::Individual);
  s.config.models = {"m1", "m2"};
  s.config.variants = {{}, {4}, {1, 4}};
  s.config.repetitions = 2;
  const auto art = run_experiment(s.config, s.transport);
  CHECK(art.report.rows.size() == 6);
  CHECK_FALSE(art.report.rows[0].matching_enabled);
  const json preds = json::parse(slurp(art.run_dir / "predictions.json"));
  CHECK(preds.size() == 2 * 3 * 2 * 3);
  for (const auto& row : art.report.rows) {
    std::size_t errors = 0, n = 0;
    for (const auto& p : preds)
      if (p["model_id"] == row.model_id && p["variant_label"] == row.variant_label) {
        ++n;
        errors += p["json_error"].get<bool>();
      }
    CHECK(n == row.total_iterations);
    CHECK(errors == row.json_errors);
  }
  REQUIRE(art.report.structuring.size() == 2);
  CHECK(art.report.structuring[0].iterations == 18);
  CHECK(s.transport->calls() > 0);
  std::size_t log_lines = 0;
  std::ifstream log(art.run_dir / "gateway_log.jsonl");
  for (std::string line; std::getline(log, line);) {
    CHECK(json::parse(line).contains("retry_count"));
    ++log_lines;
  }
  CHECK(log_lines == static_cast<std::size_t>(s.transport->calls()));
}

TEST_CASE("a 5 x 7 x 15 grid counts 525 iterations") {
  Dataset ds;
  for (int i = 0; i < 15; ++i) {
    const std::string id = "n" + std::to_string(i);
    ds.articles.push_back({id, std::nullopt, "Report " + std::to_string(i) + ": Ann Lee left ABC Ltd.", std::nullopt, "en"});
    ds.gold.push_back({id, {"Ann Lee"}, {"ABC Ltd"}});
  }
  Setup s(EntityClass::Individual, ds);
  s.config.variants = {{}, {1}, {2}, {3}, {4}, {1, 4}, {2, 4}};
  s.config.repetitions = 5;
  const auto art = run_experiment(s.config, s.transport);
  REQUIRE(art.report.rows.size() == 7);
  std::size_t total = 0;
  for (const auto& r : art.report.rows) total += r.total_iterations;
  CHECK(total == 525);
  REQUIRE(art.report.structuring.size() == 1);
  CHECK(art.report.structuring[0].iterations == 525);
  CHECK(art.report.structuring[0].json_errors == 0);
}

TEST_CASE("baselines are scored with matching off and on") {
  Setup s(EntityClass::Organization);
  const std::vector<Prediction> baseline{
      {"a1", EntityClass::Organization, {"FBI"}, "spacy", "-", "", false, false, false, 0.0},
      {"a2", EntityClass::Organization, {"ABC Ltd"}, "spacy", "-", "", false, false, false, 0.0},
      {"a2", EntityClass::Individual, {"Ann Lee"}, "spacy", "-", "", false, false, false, 0.0}};
  save_predictions(baseline, s.dir / "spacy.json");
  s.config.baselines = {{s.dir / "spacy.json", {false, true}}};
  const auto art = run_experiment(s.config, s.transport);
  REQUIRE(art.report.rows.size() == 3);
  const auto& raw = art.report.rows[1];
  const auto& matched = art.report.rows[2];
  CHECK(raw.baseline);
  CHECK_FALSE(raw.matching_enabled);
  CHECK(matched.matching_enabled);
  CHECK(raw.f1 < matched.f1);
  CHECK(raw.recall == doctest::Approx(round_to(1.0 / 3, 3)));
  CHECK(matched.recall == doctest::Approx(round_to(2.0 / 3, 3)));
}

TEST_CASE("external predictions must reference known articles") {
  TempDir dir;
  const std::vector<Prediction> preds{{"x9", EntityClass::Individual, {"A"}, "spacy"}};
  save_predictions(preds, dir / "p.json");
  try {
    ingest_external_predictions(dir / "p.json", small_dataset());
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(contains(e.what(), "x9"));
  }
}

TEST_CASE("replay miss aborts with a partial report flushed") {
  Setup s(EntityClass::Individual);
  s.config.mode = GatewayMode::Replay;
  CHECK_THROWS_AS(run_experiment(s.config), MissingFixture);
  CHECK(fs::exists(s.dir / "runs" / "r" / "predictions.json"));
}

TEST_CASE("config validation and loading") {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"dataset": "d.json", "entity_class": "organization", "models": ["m"],
      "variants": [[], [5, 4]], "repetitions": 3, "mode": "replay", "params": {"seed": null}})";
  const auto c = ExperimentConfig::load(dir / "c.json");
  CHECK(c.dataset == dir / "d.json");
  CHECK(c.fixture_dir == dir / "exchanges");
  CHECK(c.matching_enabled());
  CHECK(c.repetitions == 3);
  CHECK_FALSE(c.params.seed.has_value());

  ExperimentConfig bad = c;
  bad.repetitions = 0;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = c;
  bad.models.clear();
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = c;
  bad.variants = {{1, 2}};
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = c;
  bad.entity_class = EntityClass::Individual;
  CHECK_THROWS_AS(bad.validate(), PreconditionError);  // addition 5 is organization-only
  CHECK_FALSE(bad.matching_enabled());
}

TEST_CASE("report renderings") {
  RunReport r;
  r.entity_class = EntityClass::Individual;
  r.rows = {{"gemma2:9b", "1),4)", 0.8235, 0.9, 0.95, 0.924, 12.34, false, 4, 525, failure_percent(4, 525), false},
            {"spacy, v3", "-", 0.4, 0.5, 0.6, 0.55, 0.0, true, 0, 15, 0.0, true}};
  r.structuring = summarize_structuring(r.rows);

  const std::string md = render_report(r, ReportFormat::Markdown);
  CHECK(contains(md, "| gemma2:9b | 0.824 | 0.900 | 0.950 | 0.924 | 12.3 | 1),4) | no | 4 | 525 | 0.76% |"));
  CHECK(contains(md, "## Structuring"));

  const std::string csv = render_report(r, ReportFormat::Csv);
  std::istringstream lines(csv);
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  CHECK(header == "model_id,accuracy,precision,recall,f1,iteration_time_s,variant_label,matching,json_errors,total_iterations,failure_percent,baseline");
  CHECK(first == "gemma2:9b,0.824,0.900,0.950,0.924,12.3,\"1),4)\",no,4,525,0.76,no");
  CHECK(second.rfind("\"spacy, v3\",", 0) == 0);
  // Reparse every CSV row and compare with the rounded report values.
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (ch == '"' && quoted && i + 1 < line.size() && line[i + 1] == '"') cells.back() += line[++i];
      else if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) cells.emplace_back();
      else cells.back() += ch;
    }
    return cells;
  };
  for (const auto& [line, row] : {std::pair{first, r.rows[0]}, std::pair{second, r.rows[1]}}) {
    const auto cells = split(line);
    REQUIRE(cells.size() == 12);
    CHECK(cells[0] == row.model_id);
    CHECK(std::stod(cells[1]) == doctest::Approx(round_to(row.accuracy, 3)));
    CHECK(std::stod(cells[2]) == doctest::Approx(round_to(row.precision, 3)));
    CHECK(std::stod(cells[3]) == doctest::Approx(round_to(row.recall, 3)));
    CHECK(std::stod(cells[4]) == doctest::Approx(round_to(row.f1, 3)));
    CHECK(std::stod(cells[5]) == doctest::Approx(round_to(row.iteration_time_s, 1)));
    CHECK(cells[6] == row.variant_label);
    CHECK((cells[7] == "yes") == row.matching_enabled);
    CHECK(std::stoul(cells[8]) == row.json_errors);
    CHECK(std::stoul(cells[9]) == row.total_iterations);
    CHECK(std::stod(cells[10]) == doctest::Approx(row.failure_percent));
    CHECK((cells[11] == "yes") == row.baseline);
  }

  const json j = json::parse(render_report(r, ReportFormat::Json));
  CHECK(j["rows"][0]["failure_percent"] == 0.76);
  CHECK(j["rows"][1]["baseline"] == true);
  CHECK(j["structuring"].size() == 1);

  TempDir dir;
  CHECK_THROWS_AS(emit_report(RunReport{}, ReportFormat::Csv, dir / "x.csv"), PreconditionError);
  emit_report(r, ReportFormat::Json, dir / "sub" / "r.json");
  CHECK(fs::exists(dir / "sub" / "r.json"));
}
