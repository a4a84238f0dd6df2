#include "nerh/experiment.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "nerh/errors.hpp"

namespace nerh {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
  if (!out) throw Error("write failed: " + path.string());
}

std::string fixed(double v, int places) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(places) << round_to(v, places);
  std::string s = ss.str();
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw PreconditionError("repetitions must be >= 1");
  if (models.empty()) throw PreconditionError("at least one model is required");
  for (const auto& m : models)
    if (m.empty()) throw PreconditionError("empty model id");
  if (variants.empty()) throw PreconditionError("at least one prompt variant is required");
  for (const auto& v : variants) PromptVariant::make(entity_class, v);
  if (dataset.empty()) throw PreconditionError("config does not name a dataset");
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  ExperimentConfig c;
  try {
    c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
    if (j.contains("entity_class")) c.entity_class = parse_entity_class(j["entity_class"].get<std::string>());
    c.models = j.at("models").get<std::vector<std::string>>();
    c.structuring_model = j.value("structuring_model", c.structuring_model);
    c.matching_model = j.value("matching_model", c.matching_model);
    if (j.contains("matching") && !j["matching"].is_null()) c.matching = j["matching"].get<bool>();
    if (j.contains("variants")) c.variants = j["variants"].get<std::vector<std::vector<int>>>();
    c.repetitions = j.value("repetitions", 1);
    if (j.contains("mode")) c.mode = parse_gateway_mode(j["mode"].get<std::string>());
    c.endpoint = j.value("endpoint", c.endpoint);
    c.prompt_dir = resolve(base_dir, j.value("prompt_dir", std::string("prompts")));
    c.fixture_dir = resolve(base_dir, j.value("fixture_dir", std::string("exchanges")));
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("runs")));
    c.run_id = j.value("run_id", std::string());
    for (const auto& b : j.value("baselines", json::array())) {
      BaselineSpec spec;
      if (b.is_string()) {
        spec.path = resolve(base_dir, b.get<std::string>());
      } else {
        spec.path = resolve(base_dir, b.at("path").get<std::string>());
        if (b.contains("matching")) spec.matching = b["matching"].get<std::vector<bool>>();
      }
      c.baselines.push_back(std::move(spec));
    }
    if (j.contains("params")) {
      const json& p = j["params"];
      c.params.temperature = p.value("temperature", 0.0);
      if (p.contains("seed")) {
        if (p["seed"].is_null()) c.params.seed.reset();
        else c.params.seed = p["seed"].get<std::int64_t>();
      }
      if (p.contains("max_tokens") && !p["max_tokens"].is_null()) c.params.max_tokens = p["max_tokens"].get<int>();
    }
    c.retries = j.value("retries", c.retries);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.strict_replay = j.value("strict_replay", c.strict_replay);
    c.concurrent_articles = j.value("concurrent_articles", c.concurrent_articles);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (c.params.temperature < 0.0) throw PreconditionError("config: temperature must be >= 0");
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

GatewayOptions gateway_options(const ExperimentConfig& c) {
  GatewayOptions o;
  o.mode = c.mode;
  o.endpoint = resolve_endpoint(c.endpoint);
  o.fixture_dir = c.fixture_dir;
  o.retries = c.retries;
  o.timeout = std::chrono::milliseconds(static_cast<long long>(c.timeout_s * 1000.0));
  o.max_in_flight = c.max_in_flight;
  o.strict_replay = c.strict_replay;
  return o;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md" || s == "markdown-table") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw ParseError("unknown report format '" + std::string(s) + "'");
}

std::string_view extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::Markdown: return ".md";
    case ReportFormat::Csv: return ".csv";
    case ReportFormat::Json: return ".json";
  }
  return ".txt";
}

std::vector<StructuringSummary> summarize_structuring(std::span<const ReportRow> rows) {
  std::vector<StructuringSummary> out;
  for (const auto& r : rows) {
    if (r.baseline) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& s) { return s.model_id == r.model_id; });
    if (it == out.end()) {
      out.push_back({r.model_id, 0, 0, 0.0});
      it = out.end() - 1;
    }
    it->json_errors += r.json_errors;
    it->iterations += r.total_iterations;
  }
  for (auto& s : out) s.failure_percent = s.iterations ? failure_percent(s.json_errors, s.iterations) : 0.0;
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string title_for(EntityClass cls) {
  return cls == EntityClass::Individual ? "Individual identification results"
                                        : "Organization identification results";
}

}  // namespace

std::string render_report(const RunReport& report, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::Markdown: {
      out << "# " << title_for(report.entity_class) << "\n\n";
      if (report.partial) out << "> Partial report: the run aborted before finishing the grid.\n\n";
      if (!report.timing_comparable)
        out << "> Articles ran concurrently; execution times are not comparable with sequential runs.\n\n";
      out << "| Base model | Accuracy | Precision | Recall | F1 Score | Execution Time (Sec) | Prompt Additions "
             "| Matching | Json errors | Iterations | Failure percent |\n";
      out << "|---|---|---|---|---|---|---|---|---|---|---|\n";
      for (const auto& r : report.rows) {
        out << "| " << r.model_id << " | " << fixed(r.accuracy, 3) << " | " << fixed(r.precision, 3) << " | "
            << fixed(r.recall, 3) << " | " << fixed(r.f1, 3) << " | " << fixed(r.iteration_time_s, 1) << " | "
            << r.variant_label << " | " << (r.matching_enabled ? "yes" : "no") << " | " << r.json_errors
            << " | " << r.total_iterations << " | " << fixed(r.failure_percent, 2) << "% |\n";
      }
      if (!report.structuring.empty()) {
        out << "\n## Structuring\n\n| Model | Json errors | Iterations | Failure percent |\n|---|---|---|---|\n";
        for (const auto& s : report.structuring)
          out << "| " << s.model_id << " | " << s.json_errors << " | " << s.iterations << " | "
              << fixed(s.failure_percent, 2) << "% |\n";
      }
      break;
    }
    case ReportFormat::Csv: {
      out << "model_id,accuracy,precision,recall,f1,iteration_time_s,variant_label,matching,json_errors,"
             "total_iterations,failure_percent,baseline\n";
      for (const auto& r : report.rows) {
        out << csv_field(r.model_id) << ',' << fixed(r.accuracy, 3) << ',' << fixed(r.precision, 3) << ','
            << fixed(r.recall, 3) << ',' << fixed(r.f1, 3) << ',' << fixed(r.iteration_time_s, 1) << ','
            << csv_field(r.variant_label) << ',' << (r.matching_enabled ? "yes" : "no") << ',' << r.json_errors
            << ',' << r.total_iterations << ',' << fixed(r.failure_percent, 2) << ','
            << (r.baseline ? "yes" : "no") << '\n';
      }
      break;
    }
    case ReportFormat::Json: {
      ordered_json j;
      j["entity_class"] = std::string(to_string(report.entity_class));
      j["timing_comparable"] = report.timing_comparable;
      j["partial"] = report.partial;
      j["rows"] = ordered_json::array();
      for (const auto& r : report.rows) {
        ordered_json row;
        row["model_id"] = r.model_id;
        row["accuracy"] = round_to(r.accuracy, 3);
        row["precision"] = round_to(r.precision, 3);
        row["recall"] = round_to(r.recall, 3);
        row["f1"] = round_to(r.f1, 3);
        row["iteration_time_s"] = round_to(r.iteration_time_s, 1);
        row["variant_label"] = r.variant_label;
        row["matching_enabled"] = r.matching_enabled;
        row["json_errors"] = r.json_errors;
        row["total_iterations"] = r.total_iterations;
        row["failure_percent"] = round_to(r.failure_percent, 2);
        row["baseline"] = r.baseline;
        j["rows"].push_back(std::move(row));
      }
      j["structuring"] = ordered_json::array();
      for (const auto& s : report.structuring)
        j["structuring"].push_back({{"model_id", s.model_id},
                                    {"json_errors", s.json_errors},
                                    {"iterations", s.iterations},
                                    {"failure_percent", round_to(s.failure_percent, 2)}});
      out << j.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

void emit_report(const RunReport& report, ReportFormat format, const fs::path& path) {
  if (report.rows.empty()) throw PreconditionError("refusing to emit an empty report");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, render_report(report, format));
}

std::vector<Prediction> ingest_external_predictions(const fs::path& path, const Dataset& dataset) {
  auto preds = load_predictions(path);
  for (const auto& p : preds)
    if (!dataset.find_article(p.article_id))
      throw IntegrityError(path.string() + ": unknown article id '" + p.article_id + "'");
  return preds;
}

Evaluator::Evaluator(Gateway& gateway, const PromptLibrary& prompts, std::string matching_model, ChatParams params)
    : gateway_(gateway), prompts_(prompts), matching_model_(std::move(matching_model)), params_(params) {}

ArticleScore Evaluator::score_article(std::span<const std::string> gold, std::span<const std::string> predicted,
                                      bool matching) const {
  ArticleScore out;
  if (!matching) {
    out.card = score(gold, predicted);
    return out;
  }
  LlmMatch m = llm_match(gateway_, prompts_, gold, predicted, matching_model_, params_);
  out.matching_latency_s = m.latency_s;
  const auto renamed = rename(predicted, m.match);
  out.card = score(gold, renamed);
  out.match = std::move(m.match);
  return out;
}

namespace {

const std::vector<std::string>& gold_for(const Dataset& ds, const Article& a, EntityClass cls) {
  const GoldRecord* g = ds.find_gold(a.id);
  if (!g) throw IntegrityError("no gold record for article '" + a.id + "'");
  return g->entities(cls);
}

fs::path make_run_dir(const ExperimentConfig& c) {
  std::string name = c.run_id;
  if (name.empty()) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    name = std::string(buf) + "-" + std::string(to_string(c.entity_class));
    fs::path candidate = c.output_dir / name;
    for (int i = 2; fs::exists(candidate); ++i) candidate = c.output_dir / (name + "-" + std::to_string(i));
    fs::create_directories(candidate);
    return candidate;
  }
  fs::path dir = c.output_dir / name;
  fs::create_directories(dir);
  return dir;
}

ordered_json matches_to_json(std::span<const MatchLogEntry> log) {
  ordered_json arr = ordered_json::array();
  for (const auto& m : log) {
    ordered_json e;
    e["article_id"] = m.article_id;
    e["model_id"] = m.model_id;
    e["variant_label"] = m.variant_label;
    e["repetition"] = m.repetition;
    e["provenance"] = m.match.provenance == MatchProvenance::Llm ? "llm" : "oracle";
    e["pairs"] = ordered_json::parse(match_to_json(m.match).dump());
    arr.push_back(std::move(e));
  }
  return arr;
}

std::string gateway_log_jsonl(const Gateway& gw) {
  std::string out;
  for (const auto& e : gw.log()) {
    ordered_json j;
    j["key"] = e.key;
    j["model_id"] = e.model_id;
    j["purpose"] = std::string(to_string(e.purpose));
    j["mode"] = e.mode == ExchangeMode::Live ? "live" : "replayed";
    j["retry_count"] = e.retries;
    j["latency_s"] = e.latency_s;
    out += j.dump() + "\n";
  }
  return out;
}

void write_run_files(const fs::path& dir, const RunArtifacts& art, const Gateway& gw) {
  save_predictions(art.predictions, dir / "predictions.json");
  write_text(dir / "matches.json", matches_to_json(art.matches).dump(2) + "\n");
  write_text(dir / "gateway_log.jsonl", gateway_log_jsonl(gw));
  if (!art.report.rows.empty())
    for (auto f : {ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json})
      emit_report(art.report, f, dir / ("report" + std::string(extension(f))));
}

struct ArticleOutcome {
  Prediction prediction;
  ArticleScore score;
};

}  // namespace

RunReport evaluate_predictions(const ExperimentConfig& config, const Dataset& dataset,
                               std::span<const Prediction> predictions, bool matching, Gateway& gateway,
                               const PromptLibrary& prompts, std::vector<MatchLogEntry>* match_log) {
  const EntityClass cls = config.entity_class;
  Evaluator evaluator(gateway, prompts, config.matching_model, config.params);

  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::map<std::string, const Prediction*>> by_group;
  for (const auto& p : predictions) {
    if (p.entity_class != cls) continue;
    const auto key = std::make_pair(p.model_id, p.variant_label);
    if (!by_group.count(key)) groups.push_back(key);
    auto& slot = by_group[key][p.article_id];
    if (slot) throw IntegrityError("two predictions for article '" + p.article_id + "' from " + p.model_id);
    slot = &p;
  }

  RunReport report;
  report.entity_class = cls;
  for (const auto& key : groups) {
    const auto& per_article = by_group[key];
    std::vector<ScoreCard> cards;
    std::vector<double> times;
    std::size_t errors = 0, iterations = 0;
    for (int rep = 0; rep < config.repetitions; ++rep) {
      std::vector<ScoreCard> article_cards;
      double elapsed = 0.0;
      for (const auto& article : dataset.articles) {
        static const std::vector<std::string> kNone;
        auto it = per_article.find(article.id);
        const Prediction* p = it == per_article.end() ? nullptr : it->second;
        const auto& predicted = p ? p->entities : kNone;
        ArticleScore s = evaluator.score_article(gold_for(dataset, article, cls), predicted, matching);
        article_cards.push_back(s.card);
        elapsed += (p ? p->latency_s : 0.0) + s.matching_latency_s;
        errors += p && p->json_error;
        ++iterations;
        if (match_log && s.match) match_log->push_back({article.id, key.first, key.second, rep, *s.match});
      }
      cards.push_back(pool(article_cards));
      times.push_back(elapsed);
    }
    const AggregateScore agg = aggregate(cards, times);
    ReportRow row{key.first, key.second, agg.accuracy, agg.precision, agg.recall, agg.f1,
                  agg.iteration_time_s, matching, errors, iterations,
                  iterations ? failure_percent(errors, iterations) : 0.0, true};
    report.rows.push_back(std::move(row));
  }
  return report;
}

RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<Transport> transport) {
  config.validate();
  const Dataset dataset = load_dataset(config.dataset);
  const PromptLibrary prompts = PromptLibrary::load(config.prompt_dir);
  Gateway gateway(gateway_options(config), std::move(transport));

  const bool matching = config.matching_enabled();
  if (config.mode != GatewayMode::Replay) {
    std::set<std::string> needed(config.models.begin(), config.models.end());
    needed.insert(config.structuring_model);
    if (matching || !config.baselines.empty()) needed.insert(config.matching_model);
    for (const auto& m : needed)
      if (!gateway.health_check(m)) throw PreconditionError("endpoint does not serve model '" + m + "'");
  }

  const EntityClass cls = config.entity_class;
  const auto variants = enumerate_variants(cls, config.variants);
  Extractor extractor(gateway, prompts, {config.structuring_model, config.params});
  Evaluator evaluator(gateway, prompts, config.matching_model, config.params);

  RunArtifacts art;
  art.run_dir = make_run_dir(config);
  art.report.entity_class = cls;
  art.report.timing_comparable = !config.concurrent_articles;

  const auto process = [&](const Article& article, const PromptVariant& variant, const std::string& model) {
    ArticleOutcome o;
    o.prediction = extractor.extract(article, variant, model);
    o.score = evaluator.score_article(gold_for(dataset, article, cls), o.prediction.entities, matching);
    return o;
  };

  try {
    for (const auto& model : config.models) {
      for (const auto& variant : variants) {
        std::vector<ScoreCard> cards;
        std::vector<double> times;
        std::size_t errors = 0, iterations = 0;
        for (int rep = 0; rep < config.repetitions; ++rep) {
          const auto start = std::chrono::steady_clock::now();
          std::vector<ArticleOutcome> outcomes;
          if (config.concurrent_articles) {
            std::vector<std::future<ArticleOutcome>> futures;
            for (const auto& a : dataset.articles)
              futures.push_back(std::async(std::launch::async, process, std::cref(a), std::cref(variant),
                                           std::cref(model)));
            for (auto& f : futures) outcomes.push_back(f.get());
          } else {
            for (const auto& a : dataset.articles) outcomes.push_back(process(a, variant, model));
          }
          const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

          std::vector<ScoreCard> article_cards;
          double latency_sum = 0.0;
          for (auto& o : outcomes) {
            article_cards.push_back(o.score.card);
            latency_sum += o.prediction.latency_s + o.score.matching_latency_s;
            errors += o.prediction.json_error;
            ++iterations;
            if (o.score.match)
              art.matches.push_back({o.prediction.article_id, model, variant.label(), rep, *o.score.match});
            art.predictions.push_back(std::move(o.prediction));
          }
          cards.push_back(pool(article_cards));
          // Replayed latencies come from the recording, which keeps replay
          // reports reproducible.
          times.push_back(config.mode == GatewayMode::Replay ? latency_sum : wall);
        }
        const AggregateScore agg = aggregate(cards, times);
        art.report.rows.push_back({model, variant.label(), agg.accuracy, agg.precision, agg.recall, agg.f1,
                                   agg.iteration_time_s, matching, errors, iterations,
                                   failure_percent(errors, iterations), false});
      }
    }

    for (const auto& b : config.baselines) {
      const auto preds = ingest_external_predictions(b.path, dataset);
      const std::vector<bool> flags = b.matching.empty() ? std::vector<bool>{matching} : b.matching;
      for (bool m : flags) {
        RunReport sub = evaluate_predictions(config, dataset, preds, m, gateway, prompts, &art.matches);
        for (auto& r : sub.rows) art.report.rows.push_back(std::move(r));
      }
    }
  } catch (...) {
    art.report.partial = true;
    art.report.structuring = summarize_structuring(art.report.rows);
    try {
      write_run_files(art.run_dir, art, gateway);
      spdlog::error("run aborted; partial results flushed to {}", art.run_dir.string());
    } catch (const std::exception& e) {
      spdlog::error("run aborted and flushing partial results failed: {}", e.what());
    }
    throw;
  }

  art.report.structuring = summarize_structuring(art.report.rows);
  write_run_files(art.run_dir, art, gateway);
  return art;
}

}  // namespace nerh
