#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerh/corpus.hpp"
#include "nerh/extraction.hpp"
#include "nerh/llm_gateway.hpp"
#include "nerh/matching.hpp"
#include "nerh/prompt_forge.hpp"
#include "nerh/scoring.hpp"

namespace nerh {

struct BaselineSpec {
  std::filesystem::path path;
  /// One report row per entry; empty means "use the experiment's setting".
  std::vector<bool> matching;
};

/// Experiment configuration file (JSON). Relative paths resolve against the
/// directory holding the config file.
///
///   {
///     "dataset": "dataset.json",            required
///     "entity_class": "organization",       "individual" | "organization"
///     "models": ["gemma2:9b"],              required, non-empty
///     "structuring_model": "qwen2:7b",
///     "matching_model": "gemma2:9b",
///     "matching": true,                     default: on for organization only
///     "variants": [[], [4], [1, 4, 5]],     default [[]]
///     "repetitions": 1,
///     "mode": "replay",                     "live" | "record" | "replay"
///     "endpoint": "http://localhost:11434", NERH_ENDPOINT overrides
///     "prompt_dir": "prompts",
///     "fixture_dir": "exchanges",
///     "output_dir": "runs",
///     "run_id": "demo",                     fixed run directory name (optional)
///     "baselines": ["spacy.json", {"path": "b.json", "matching": [false, true]}],
///     "params": {"temperature": 0.0, "seed": 42, "max_tokens": null},
///     "retries": 2, "timeout_s": 120, "max_in_flight": 1,
///     "strict_replay": true,
///     "concurrent_articles": false
///   }
struct ExperimentConfig {
  std::filesystem::path dataset;
  EntityClass entity_class = EntityClass::Individual;
  std::vector<std::string> models;
  std::string structuring_model = "qwen2:7b";
  std::string matching_model = "gemma2:9b";
  std::optional<bool> matching;
  std::vector<std::vector<int>> variants{{}};
  int repetitions = 1;
  GatewayMode mode = GatewayMode::Replay;
  std::string endpoint = std::string(kDefaultEndpoint);
  std::filesystem::path prompt_dir;
  std::filesystem::path fixture_dir;
  std::filesystem::path output_dir = "runs";
  std::string run_id;
  std::vector<BaselineSpec> baselines;
  ChatParams params;
  int retries = 2;
  double timeout_s = 120.0;
  int max_in_flight = 1;
  bool strict_replay = true;
  bool concurrent_articles = false;

  bool matching_enabled() const {
    return matching.value_or(entity_class == EntityClass::Organization);
  }
  /// Throws PreconditionError on repetitions < 1, no models or bad variants.
  void validate() const;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
};

GatewayOptions gateway_options(const ExperimentConfig& config);

struct ReportRow {
  std::string model_id;
  std::string variant_label;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iteration_time_s = 0.0;
  bool matching_enabled = false;
  std::size_t json_errors = 0;
  std::size_t total_iterations = 0;
  double failure_percent = 0.0;
  bool baseline = false;

  bool operator==(const ReportRow&) const = default;
};

/// Structuring failures per extraction model, summed over its rows.
struct StructuringSummary {
  std::string model_id;
  std::size_t json_errors = 0;
  std::size_t iterations = 0;
  double failure_percent = 0.0;

  bool operator==(const StructuringSummary&) const = default;
};

struct RunReport {
  EntityClass entity_class = EntityClass::Individual;
  std::vector<ReportRow> rows;
  std::vector<StructuringSummary> structuring;
  /// False when articles ran concurrently inside a pass.
  bool timing_comparable = true;
  /// True when the run aborted and this is what was finished.
  bool partial = false;
};

enum class ReportFormat { Markdown, Csv, Json };
ReportFormat parse_report_format(std::string_view s);
std::string_view extension(ReportFormat f);

std::string render_report(const RunReport& report, ReportFormat format);
/// Throws PreconditionError on an empty report, Error on I/O failure.
void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path);

/// Recomputes the per-model structuring summaries from the rows.
std::vector<StructuringSummary> summarize_structuring(std::span<const ReportRow> rows);

/// Loads a predictions file and checks every article id against `dataset`.
std::vector<Prediction> ingest_external_predictions(const std::filesystem::path& path,
                                                    const Dataset& dataset);

struct MatchLogEntry {
  std::string article_id;
  std::string model_id;
  std::string variant_label;
  int repetition = 0;
  MatchResult match;
};

struct RunArtifacts {
  RunReport report;
  std::vector<Prediction> predictions;
  std::vector<MatchLogEntry> matches;
  std::filesystem::path run_dir;
};

/// Shared per-article scoring path: optional matching, renaming, scoring.
struct ArticleScore {
  ScoreCard card;
  std::optional<MatchResult> match;
  double matching_latency_s = 0.0;
};

class Evaluator {
 public:
  Evaluator(Gateway& gateway, const PromptLibrary& prompts, std::string matching_model, ChatParams params);

  ArticleScore score_article(std::span<const std::string> gold, std::span<const std::string> predicted,
                             bool matching) const;

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  std::string matching_model_;
  ChatParams params_;
};

/// Runs the model x variant x repetition grid plus configured baselines and
/// writes the run directory. `transport` overrides the HTTP transport.
RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<Transport> transport = nullptr);

/// Scores an existing set of predictions (one row per model/variant group
/// of the configured class, repeated over `config.repetitions`).
RunReport evaluate_predictions(const ExperimentConfig& config, const Dataset& dataset,
                               std::span<const Prediction> predictions, bool matching, Gateway& gateway,
                               const PromptLibrary& prompts, std::vector<MatchLogEntry>* match_log = nullptr);

}  // namespace nerh
