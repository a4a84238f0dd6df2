#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerh/corpus.hpp"
#include "nerh/llm_gateway.hpp"
#include "nerh/prompt_forge.hpp"

namespace nerh {

struct Prediction {
  std::string article_id;
  EntityClass entity_class = EntityClass::Individual;
  std::vector<std::string> entities;
  std::string model_id;
  std::string variant_label = "-";
  std::string raw_response;
  bool structuring_invoked = false;
  bool json_error = false;
  bool salvaged = false;
  double latency_s = 0.0;

  bool operator==(const Prediction&) const = default;
};

enum class InvalidReason { NoJson, WrongKey, WrongValueType, EmptyStrings, Unrecoverable };
std::string_view to_string(InvalidReason r);

/// Either a parsed entity list or the reason it could not be produced.
struct ParsedList {
  std::optional<std::vector<std::string>> entities;
  InvalidReason reason = InvalidReason::NoJson;

  bool valid() const { return entities.has_value(); }
  static ParsedList ok(std::vector<std::string> v) { return {std::move(v), InvalidReason::NoJson}; }
  static ParsedList invalid(InvalidReason r) { return {std::nullopt, r}; }
};

/// Valid iff `text` embeds exactly one JSON object and that object maps the
/// class key to an array of non-empty strings. Prose around the object is
/// tolerated. Never throws.
ParsedList validate_response(std::string_view text, EntityClass cls);

/// Last-resort recovery: the earliest-starting well-formed JSON array whose
/// elements are all strings. Never throws.
ParsedList salvage_parse(std::string_view text);

/// Whitespace-normalizes, drops empty strings and keeps first occurrences.
std::vector<std::string> dedupe_entities(std::span<const std::string> entities);

struct ExtractorSettings {
  std::string structuring_model = "qwen2:7b";
  ChatParams params;
};

/// prompt -> model -> validate -> structuring fallback -> salvage.
class Extractor {
 public:
  Extractor(Gateway& gateway, const PromptLibrary& prompts, ExtractorSettings settings = {});

  /// Gateway errors propagate; parse failures end up in the Prediction flags.
  Prediction extract(const Article& article, const PromptVariant& variant,
                     const std::string& model_id) const;

 private:
  Gateway& gateway_;
  const PromptLibrary& prompts_;
  ExtractorSettings settings_;
};

nlohmann::ordered_json prediction_to_json(const Prediction& p);
/// Only article_id, entity_class, entities and model_id are required; flags
/// default to false. Throws ParseError.
Prediction prediction_from_json(const nlohmann::json& j, const std::string& where = "prediction");

/// Predictions file: a JSON array of prediction objects.
std::string serialize_predictions(std::span<const Prediction> predictions);
std::vector<Prediction> parse_predictions(std::string_view json_text, std::string_view source = "<memory>");
void save_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace nerh
