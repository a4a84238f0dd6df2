#include "nerh/extraction.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "nerh/errors.hpp"
#include "nerh/text.hpp"

namespace nerh {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(InvalidReason r) {
  switch (r) {
    case InvalidReason::NoJson: return "no-json";
    case InvalidReason::WrongKey: return "wrong-key";
    case InvalidReason::WrongValueType: return "wrong-value-type";
    case InvalidReason::EmptyStrings: return "empty-strings";
    case InvalidReason::Unrecoverable: return "unrecoverable";
  }
  return "unrecoverable";
}

namespace {

/// Top-level JSON objects embedded in free text, left to right.
std::vector<json> embedded_objects(std::string_view text) {
  std::vector<json> out;
  std::size_t i = 0;
  while ((i = text.find('{', i)) != std::string_view::npos) {
    auto span = text::balanced_span(text, i);
    if (span) {
      json j = json::parse(text.substr(span->begin, span->end - span->begin), nullptr, false);
      if (!j.is_discarded() && j.is_object()) {
        out.push_back(std::move(j));
        i = span->end;
        continue;
      }
    }
    ++i;
  }
  return out;
}

}  // namespace

ParsedList validate_response(std::string_view text, EntityClass cls) {
  const auto objects = embedded_objects(text);
  if (objects.size() != 1) return ParsedList::invalid(InvalidReason::NoJson);
  const json& obj = objects.front();
  auto it = obj.find(std::string(class_key(cls)));
  if (it == obj.end()) return ParsedList::invalid(InvalidReason::WrongKey);
  if (!it->is_array()) return ParsedList::invalid(InvalidReason::WrongValueType);
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_string()) return ParsedList::invalid(InvalidReason::WrongValueType);
    std::string s = v.get<std::string>();
    if (text::normalize_whitespace(s).empty()) return ParsedList::invalid(InvalidReason::EmptyStrings);
    out.push_back(std::move(s));
  }
  return ParsedList::ok(std::move(out));
}

ParsedList salvage_parse(std::string_view text) {
  std::size_t i = 0;
  while ((i = text.find('[', i)) != std::string_view::npos) {
    if (auto span = text::balanced_span(text, i)) {
      json j = json::parse(text.substr(span->begin, span->end - span->begin), nullptr, false);
      if (!j.is_discarded() && j.is_array()) {
        bool all_strings = true;
        for (const auto& v : j) all_strings = all_strings && v.is_string();
        if (all_strings) {
          std::vector<std::string> out;
          for (const auto& v : j) out.push_back(v.get<std::string>());
          return ParsedList::ok(std::move(out));
        }
      }
    }
    ++i;
  }
  return ParsedList::invalid(InvalidReason::Unrecoverable);
}

std::vector<std::string> dedupe_entities(std::span<const std::string> entities) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : entities) {
    std::string n = text::normalize_whitespace(e);
    if (n.empty() || !seen.insert(n).second) continue;
    out.push_back(std::move(n));
  }
  return out;
}

Extractor::Extractor(Gateway& gateway, const PromptLibrary& prompts, ExtractorSettings settings)
    : gateway_(gateway), prompts_(prompts), settings_(std::move(settings)) {}

Prediction Extractor::extract(const Article& article, const PromptVariant& variant,
                              const std::string& model_id) const {
  Prediction p;
  p.article_id = article.id;
  p.entity_class = variant.entity_class;
  p.model_id = model_id;
  p.variant_label = variant.label();

  const ChatExchange first = gateway_.chat(
      {model_id, render_extraction_prompt(prompts_, article, variant), settings_.params, Purpose::Extraction});
  p.raw_response = first.response_text;
  p.latency_s = first.latency_s;

  ParsedList parsed = validate_response(first.response_text, p.entity_class);
  if (!parsed.valid()) {
    p.structuring_invoked = true;
    // An empty answer still goes through the structuring model with a
    // placeholder so the flow stays uniform.
    const std::string raw = first.response_text.empty() ? std::string("(empty response)") : first.response_text;
    const ChatExchange fixed = gateway_.chat({settings_.structuring_model,
                                              render_structuring_prompt(prompts_, raw, p.entity_class),
                                              settings_.params, Purpose::Structuring});
    p.latency_s += fixed.latency_s;
    parsed = validate_response(fixed.response_text, p.entity_class);
    if (!parsed.valid()) {
      p.json_error = true;
      parsed = salvage_parse(fixed.response_text);
      if (!parsed.valid()) parsed = salvage_parse(first.response_text);
      p.salvaged = parsed.valid();
    }
  }
  if (parsed.valid()) p.entities = dedupe_entities(*parsed.entities);
  return p;
}

ordered_json prediction_to_json(const Prediction& p) {
  ordered_json j;
  j["article_id"] = p.article_id;
  j["entity_class"] = std::string(to_string(p.entity_class));
  j["entities"] = p.entities;
  j["model_id"] = p.model_id;
  j["variant_label"] = p.variant_label;
  j["raw_response"] = p.raw_response;
  j["structuring_invoked"] = p.structuring_invoked;
  j["json_error"] = p.json_error;
  j["salvaged"] = p.salvaged;
  j["latency_s"] = p.latency_s;
  return j;
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where, bool required, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw ParseError(where + "." + key + ": missing");
    return fallback;
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + "." + key + ": wrong type");
  }
}

}  // namespace

Prediction prediction_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected object");
  Prediction p;
  p.article_id = field<std::string>(j, "article_id", where, true, {});
  try {
    p.entity_class = parse_entity_class(field<std::string>(j, "entity_class", where, true, {}));
  } catch (const ParseError& e) {
    throw ParseError(where + ".entity_class: " + e.what());
  }
  const auto entities = field<std::vector<std::string>>(j, "entities", where, true, {});
  p.entities = dedupe_entities(entities);
  p.model_id = field<std::string>(j, "model_id", where, true, {});
  p.variant_label = field<std::string>(j, "variant_label", where, false, "-");
  p.raw_response = field<std::string>(j, "raw_response", where, false, {});
  p.structuring_invoked = field<bool>(j, "structuring_invoked", where, false, false);
  p.json_error = field<bool>(j, "json_error", where, false, false);
  p.salvaged = field<bool>(j, "salvaged", where, false, false);
  p.latency_s = field<double>(j, "latency_s", where, false, 0.0);
  if (p.json_error && !p.structuring_invoked) throw ParseError(where + ": json_error requires structuring_invoked");
  if (p.salvaged && !p.json_error) throw ParseError(where + ": salvaged requires json_error");
  return p;
}

std::string serialize_predictions(std::span<const Prediction> predictions) {
  std::string out = "[";
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ordered_json j = prediction_to_json(predictions[i]);
    out += i ? ",\n  " : "\n  ";
    out += j.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
  }
  out += predictions.empty() ? "]\n" : "\n]\n";
  return out;
}

std::vector<Prediction> parse_predictions(std::string_view json_text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text::strip_bom(json_text));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(std::string(source) + ": expected a JSON array of predictions");
  std::vector<Prediction> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i)
    out.push_back(prediction_from_json(doc[i], std::string(source) + ": [" + std::to_string(i) + "]"));
  return out;
}

void save_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_predictions(predictions);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_predictions(ss.str(), path.string());
}

}  // namespace nerh
