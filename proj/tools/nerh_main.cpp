// nerh: command-line front end for the extraction harness.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nerh/bench_service.hpp"
#include "nerh/corpus.hpp"
#include "nerh/errors.hpp"
#include "nerh/experiment.hpp"
#include "nerh/extraction.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitGateway = 4;

struct CommonOptions {
  std::string config;
  std::string mode;
  std::string cls;
  std::string matching;
  std::string out;
  std::string prompts;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_matching) {
  cmd->add_option("--config", o.config, "Experiment config file (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--mode", o.mode, "Gateway mode")->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--class", o.cls, "Entity class")->check(CLI::IsMember({"individual", "organization"}));
  if (with_matching)
    cmd->add_option("--matching", o.matching, "LLM matching before scoring")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--prompts", o.prompts, "Prompt template directory");
}

nerh::ExperimentConfig load_config(const CommonOptions& o) {
  auto c = nerh::ExperimentConfig::load(o.config);
  if (!o.mode.empty()) c.mode = nerh::parse_gateway_mode(o.mode);
  if (!o.cls.empty()) c.entity_class = nerh::parse_entity_class(o.cls);
  if (!o.matching.empty()) c.matching = o.matching == "on";
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.prompts.empty()) c.prompt_dir = o.prompts;
  else if (!fs::is_directory(c.prompt_dir)) c.prompt_dir = NERH_DEFAULT_PROMPT_DIR;
  c.validate();
  return c;
}

int cmd_stats(const std::string& dataset_path, bool as_json) {
  const auto ds = nerh::load_dataset(dataset_path);
  const auto st = nerh::compute_stats(ds.articles);
  std::size_t individuals = 0, organizations = 0;
  for (const auto& g : ds.gold) {
    individuals += g.individuals.size();
    organizations += g.organizations.size();
  }
  if (as_json) {
    nlohmann::ordered_json j;
    j["article_count"] = st.article_count;
    j["sentence_count"] = st.sentence_count;
    j["word_count"] = st.word_count;
    j["char_count"] = st.char_count;
    j["avg_sentence_len_words"] = st.avg_sentence_len_words;
    j["individuals"] = individuals;
    j["organizations"] = organizations;
    std::cout << j.dump(2) << '\n';
  } else {
    std::printf("articles       %zu\nsentences      %zu\nwords          %zu\nchars          %zu\n"
                "avg words/sent %.1f\nindividuals    %zu\norganizations  %zu\n",
                st.article_count, st.sentence_count, st.word_count, st.char_count, st.avg_sentence_len_words,
                individuals, organizations);
  }
  return 0;
}

int cmd_extract(const CommonOptions& o) {
  const auto c = load_config(o);
  const auto ds = nerh::load_dataset(c.dataset);
  const auto prompts = nerh::PromptLibrary::load(c.prompt_dir);
  nerh::Gateway gateway(nerh::gateway_options(c));
  nerh::Extractor extractor(gateway, prompts, {c.structuring_model, c.params});
  std::vector<nerh::Prediction> preds;
  for (const auto& model : c.models)
    for (const auto& variant : nerh::enumerate_variants(c.entity_class, c.variants))
      for (const auto& a : ds.articles) preds.push_back(extractor.extract(a, variant, model));
  const fs::path out = c.output_dir / "predictions.json";
  fs::create_directories(c.output_dir);
  nerh::save_predictions(preds, out);
  std::cout << out.string() << '\n';
  return 0;
}

// Scores a predictions file. Baseline files get both matching settings
// unless --matching pins one.
int cmd_score(const CommonOptions& o, const std::string& predictions_path, bool baseline) {
  const auto c = load_config(o);
  const auto ds = nerh::load_dataset(c.dataset);
  const auto preds = baseline ? nerh::ingest_external_predictions(predictions_path, ds)
                              : nerh::load_predictions(predictions_path);
  const auto prompts = nerh::PromptLibrary::load(c.prompt_dir);
  nerh::Gateway gateway(nerh::gateway_options(c));

  std::vector<bool> settings;
  if (!o.matching.empty()) settings = {o.matching == "on"};
  else if (baseline) settings = {false, true};
  else settings = {c.matching_enabled()};

  nerh::RunReport report;
  report.entity_class = c.entity_class;
  for (bool m : settings) {
    auto sub = nerh::evaluate_predictions(c, ds, preds, m, gateway, prompts);
    for (auto& r : sub.rows) {
      r.baseline = baseline;
      report.rows.push_back(std::move(r));
    }
  }
  if (report.rows.empty()) {
    spdlog::error("no predictions of class {} in {}", nerh::to_string(c.entity_class), predictions_path);
    return kExitData;
  }
  report.structuring = nerh::summarize_structuring(report.rows);
  for (auto f : {nerh::ReportFormat::Markdown, nerh::ReportFormat::Csv, nerh::ReportFormat::Json})
    nerh::emit_report(report, f, c.output_dir / ("report" + std::string(nerh::extension(f))));
  std::cout << nerh::render_report(report, nerh::ReportFormat::Markdown);
  return 0;
}

int cmd_experiment(const CommonOptions& o, const std::string& run_id) {
  auto c = load_config(o);
  if (!run_id.empty()) c.run_id = run_id;
  const auto art = nerh::run_experiment(c);
  std::cout << nerh::render_report(art.report, nerh::ReportFormat::Markdown);
  spdlog::info("run directory: {}", art.run_dir.string());
  return 0;
}

struct ServeOptions {
  std::string dataset;
  std::string root = "bench";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string predictions;
  std::string model;
  std::string verify_model = "gemma2:9b";
  std::string mode = "live";
  std::string fixtures;
  std::string endpoint = std::string(nerh::kDefaultEndpoint);
  std::string static_dir;
  std::string prompts = NERH_DEFAULT_PROMPT_DIR;
};

int cmd_serve(const ServeOptions& o) {
  auto ds = nerh::load_dataset(o.dataset);
  nerh::PreannotationSource source;
  if (!o.predictions.empty()) source.predictions = nerh::ingest_external_predictions(o.predictions, ds);
  source.extraction_model = o.model;

  nerh::GatewayOptions gw;
  gw.mode = nerh::parse_gateway_mode(o.mode);
  gw.endpoint = nerh::resolve_endpoint(o.endpoint);
  gw.fixture_dir = o.fixtures.empty() ? fs::path(o.root) / "exchanges" : fs::path(o.fixtures);
  nerh::Gateway gateway(gw);
  const auto prompts = nerh::PromptLibrary::load(o.prompts);

  nerh::BenchService service(std::move(ds), o.root, source, &gateway, &prompts);
  httplib::Server server;
  std::optional<fs::path> static_dir;
  if (!o.static_dir.empty()) static_dir = o.static_dir;
  nerh::mount_routes(server, service, o.verify_model, static_dir);
  spdlog::info("serving on http://{}:{}", o.host, o.port);
  if (!server.listen(o.host, o.port)) {
    spdlog::error("cannot listen on {}:{}", o.host, o.port);
    return kExitUsage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity extraction evaluation harness"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");

  std::string stats_dataset, stats_config;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "Corpus statistics for a dataset file");
  auto* stats_ds_opt = stats->add_option("--dataset", stats_dataset, "Dataset file")->check(CLI::ExistingFile);
  stats->add_option("--config", stats_config, "Take the dataset from this config")
      ->check(CLI::ExistingFile)
      ->excludes(stats_ds_opt);
  stats->add_flag("--json", stats_json, "Print JSON");

  CommonOptions extract_opts;
  auto* extract = app.add_subcommand("extract", "Run extraction only and write predictions.json");
  add_common(extract, extract_opts, false);

  CommonOptions eval_opts;
  std::string eval_predictions;
  auto* evaluate = app.add_subcommand("evaluate", "Score a predictions file against the gold lists");
  add_common(evaluate, eval_opts, true);
  evaluate->add_option("--predictions", eval_predictions, "Predictions file")->required()->check(CLI::ExistingFile);

  CommonOptions exp_opts;
  std::string run_id;
  auto* experiment = app.add_subcommand("experiment", "Run the model x variant x repetition grid");
  add_common(experiment, exp_opts, true);
  experiment->add_option("--run-id", run_id, "Run directory name under the output directory");

  CommonOptions ingest_opts;
  std::string ingest_predictions;
  auto* ingest = app.add_subcommand("ingest-baseline", "Validate and score an external baseline's predictions");
  add_common(ingest, ingest_opts, true);
  ingest->add_option("--predictions", ingest_predictions, "Predictions file")->required()->check(CLI::ExistingFile);

  ServeOptions serve_opts;
  auto* serve = app.add_subcommand("serve", "Start the benchmark-generation HTTP service");
  serve->add_option("--dataset", serve_opts.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  serve->add_option("--root", serve_opts.root, "Draft and export directory")->capture_default_str();
  serve->add_option("--host", serve_opts.host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_opts.port, "Port")->capture_default_str();
  serve->add_option("--predictions", serve_opts.predictions, "Baseline predictions for pre-annotation");
  serve->add_option("--model", serve_opts.model, "Extraction model for pre-annotation");
  serve->add_option("--verify-model", serve_opts.verify_model, "Default verification model")->capture_default_str();
  serve->add_option("--mode", serve_opts.mode, "Gateway mode")->capture_default_str()->check(CLI::IsMember({"live", "record", "replay"}));
  serve->add_option("--fixtures", serve_opts.fixtures, "Fixture directory for record/replay");
  serve->add_option("--endpoint", serve_opts.endpoint, "Model server URL")->capture_default_str();
  serve->add_option("--static", serve_opts.static_dir, "Directory served at /");
  serve->add_option("--prompts", serve_opts.prompts, "Prompt template directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*stats) {
      if (stats_dataset.empty() && stats_config.empty()) {
        std::cerr << "stats: one of --dataset or --config is required\n";
        return kExitUsage;
      }
      const std::string path =
          stats_dataset.empty() ? nerh::ExperimentConfig::load(stats_config).dataset.string() : stats_dataset;
      return cmd_stats(path, stats_json);
    }
    if (*extract) return cmd_extract(extract_opts);
    if (*evaluate) return cmd_score(eval_opts, eval_predictions, false);
    if (*experiment) return cmd_experiment(exp_opts, run_id);
    if (*ingest) return cmd_score(ingest_opts, ingest_predictions, true);
    if (*serve) return cmd_serve(serve_opts);
  } catch (const nerh::PreconditionError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const nerh::TransportError& e) {
    spdlog::error("{}", e.what());
    return kExitGateway;
  } catch (const nerh::MissingFixture& e) {
    spdlog::error("{}", e.what());
    return kExitGateway;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return 0;
}
