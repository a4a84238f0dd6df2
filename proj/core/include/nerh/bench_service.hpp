#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerh/corpus.hpp"
#include "nerh/extraction.hpp"
#include "nerh/llm_gateway.hpp"
#include "nerh/prompt_forge.hpp"

namespace httplib {
class Server;
}

namespace nerh {

enum class EntryStatus { Proposed, Accepted, Rejected, Added };
enum class EntrySource { Baseline, Llm, Human };

std::string_view to_string(EntryStatus s);
std::string_view to_string(EntrySource s);
EntryStatus parse_entry_status(std::string_view s);
EntrySource parse_entry_source(std::string_view s);

struct DraftEntry {
  std::string text;
  EntryStatus status = EntryStatus::Proposed;
  EntrySource source = EntrySource::Human;
  /// Free-form reviewer note (e.g. "confirmed by web search").
  std::string note;

  bool operator==(const DraftEntry&) const = default;
};

struct AnnotationDraft {
  std::string article_id;
  EntityClass entity_class = EntityClass::Individual;
  std::vector<DraftEntry> entries;
  /// 0 for a draft that has never been stored.
  int version = 0;

  bool operator==(const AnnotationDraft&) const = default;
};

nlohmann::json draft_to_json(const AnnotationDraft& d);
AnnotationDraft draft_from_json(const nlohmann::json& j);

/// Accepted and added entries must be non-empty. Throws ValidationError.
void validate_draft(const AnnotationDraft& d);

/// Versioned draft files: <root>/<article>/<class>/v000001.json, ...
/// Writes to one (article, class) stream are serialized; reads are lock-free
/// against completed writes.
class DraftStore {
 public:
  explicit DraftStore(std::filesystem::path root);

  std::optional<AnnotationDraft> current(const std::string& article_id, EntityClass cls) const;
  int current_version(const std::string& article_id, EntityClass cls) const;

  /// Stores `draft` if draft.version equals the stored version (0 when none)
  /// and returns the new version. Throws VersionConflict otherwise.
  int put(const AnnotationDraft& draft);

 private:
  std::filesystem::path stream_dir(const std::string& article_id, EntityClass cls) const;
  std::mutex& stream_mutex(const std::string& article_id, EntityClass cls);

  std::filesystem::path root_;
  std::mutex table_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> stream_mutexes_;
};

/// Where proposed entries come from.
struct PreannotationSource {
  /// Ingested predictions (e.g. a conventional NER baseline).
  std::vector<Prediction> predictions;
  /// Or: run the extraction pipeline with this model.
  std::string extraction_model;
  std::string structuring_model = "qwen2:7b";
  std::vector<int> variant;

  bool configured() const { return !predictions.empty() || !extraction_model.empty(); }
};

struct Verdict {
  std::string entry;
  std::string verdict;  // "confirm" | "flag"
  std::string note;

  bool operator==(const Verdict&) const = default;
};

/// Benchmark-generation workbench: pre-annotation, human correction with
/// optimistic versioning, advisory model verification and gold export.
class BenchService {
 public:
  BenchService(Dataset dataset, std::filesystem::path root, PreannotationSource source,
               Gateway* gateway = nullptr, const PromptLibrary* prompts = nullptr);

  const Dataset& dataset() const { return dataset_; }

  /// Throws NotFound (unknown article) or PreconditionError (no source).
  AnnotationDraft get_preannotations(const std::string& article_id, EntityClass cls) const;

  /// Stored draft, else fresh pre-annotations at version 0.
  AnnotationDraft get_draft(const std::string& article_id, EntityClass cls) const;

  /// Throws NotFound, ValidationError or VersionConflict.
  int put_draft(const std::string& article_id, EntityClass cls, const AnnotationDraft& draft);

  /// Entries not found verbatim in the article are flagged without a model
  /// call; the rest are judged by the verification prompt. Never writes.
  std::vector<Verdict> verify_draft(const std::string& article_id, EntityClass cls,
                                    const std::string& model_id) const;

  /// Builds the gold dataset from accepted + added entries, writes it to
  /// <root>/exports/<name>.json and returns it. Throws IntegrityError listing
  /// every article without a stored draft for each class.
  Dataset export_gold(const std::string& dataset_name) const;

 private:
  const Article& article(const std::string& id) const;

  Dataset dataset_;
  std::filesystem::path root_;
  PreannotationSource source_;
  Gateway* gateway_;
  const PromptLibrary* prompts_;
  mutable DraftStore store_;
};

/// Registers the HTTP+JSON API:
///   GET  /articles
///   GET  /articles/{id}
///   GET  /articles/{id}/draft/{class}
///   PUT  /articles/{id}/draft/{class}
///   POST /articles/{id}/verify/{class}     body {"model_id": "..."} optional
///   POST /export                           body {"name": "..."}
/// Errors are JSON {"code", "message"}. When `static_dir` is set it is
/// served at "/".
void mount_routes(httplib::Server& server, BenchService& service, std::string default_verify_model,
                  const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace nerh
