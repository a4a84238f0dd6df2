#include "nerh/prompt_forge.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "nerh/errors.hpp"

namespace nerh {

int max_addition_id(EntityClass cls) { return cls == EntityClass::Individual ? 4 : 5; }

std::string PromptVariant::label() const {
  if (additions.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < additions.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(additions[i]) + ")";
  }
  return out;
}

PromptVariant PromptVariant::make(EntityClass cls, std::vector<int> additions) {
  std::sort(additions.begin(), additions.end());
  additions.erase(std::unique(additions.begin(), additions.end()), additions.end());
  int roles = 0;
  for (int id : additions) {
    if (id < 1 || id > max_addition_id(cls))
      throw PreconditionError("unknown prompt addition " + std::to_string(id) + " for class " +
                              std::string(to_string(cls)));
    if (id <= 3) ++roles;
  }
  if (roles > 1) throw PreconditionError("prompt additions 1), 2), 3) are roles; at most one may be used");
  return PromptVariant{cls, std::move(additions)};
}

PromptVariant PromptVariant::parse(EntityClass cls, std::string_view label) {
  if (label == "-") return make(cls, {});
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < label.size()) {
    std::size_t end = label.find(',', pos);
    if (end == std::string_view::npos) end = label.size();
    std::string_view tok = label.substr(pos, end - pos);
    if (tok.size() < 2 || tok.back() != ')')
      throw ParseError("malformed variant label '" + std::string(label) + "'");
    tok.remove_suffix(1);
    int id = 0;
    for (char c : tok) {
      if (c < '0' || c > '9') throw ParseError("malformed variant label '" + std::string(label) + "'");
      id = id * 10 + (c - '0');
    }
    ids.push_back(id);
    pos = end + 1;
  }
  if (ids.empty()) throw ParseError("empty variant label");
  PromptVariant v = make(cls, ids);
  if (v.label() != label) throw ParseError("non-canonical variant label '" + std::string(label) + "'");
  return v;
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && ((tmpl[j] >= 'a' && tmpl[j] <= 'z') || tmpl[j] == '_')) ++j;
    if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
      std::string name(tmpl.substr(i + 1, j - i - 1));
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
      i = j;
    }
  }
  return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && ((tmpl[j] >= 'a' && tmpl[j] <= 'z') || tmpl[j] == '_')) ++j;
      if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
        const std::string name(tmpl.substr(i + 1, j - i - 1));
        auto it = bindings.find(name);
        if (it == bindings.end()) throw PreconditionError("unbound placeholder {" + name + "}");
        out += it->second;
        i = j;
        continue;
      }
    }
    out.push_back(tmpl[i]);
  }
  return out;
}

PromptLibrary::PromptLibrary(std::map<std::string, std::string> templates)
    : templates_(std::move(templates)) {}

std::vector<std::string> PromptLibrary::required_ids() {
  return {"extract_individual", "extract_organization",
          "role_individual_1", "role_individual_2", "role_individual_3",
          "role_organization_1", "role_organization_2", "role_organization_3",
          "chain_of_thought", "context_organization",
          "structuring", "matching", "verification"};
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("prompt directory not found: " + dir.string());
  std::map<std::string, std::string> templates;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string body = ss.str();
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    templates[entry.path().stem().string()] = std::move(body);
  }
  for (const auto& id : required_ids())
    if (!templates.count(id)) throw ParseError("prompt directory " + dir.string() + " lacks " + id + ".txt");
  return PromptLibrary(std::move(templates));
}

const std::string& PromptLibrary::text(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw PreconditionError("unknown prompt template '" + id + "'");
  return it->second;
}

std::string PromptLibrary::render(const std::string& id,
                                  const std::map<std::string, std::string>& bindings) const {
  return render_template(text(id), bindings);
}

namespace {

std::string class_word(EntityClass cls) { return std::string(to_string(cls)); }

}  // namespace

std::string render_extraction_prompt(const PromptLibrary& lib, const Article& article,
                                     const PromptVariant& variant) {
  const PromptVariant v = PromptVariant::make(variant.entity_class, variant.additions);
  const std::string cls = class_word(v.entity_class);
  std::vector<std::string> parts;
  for (int id : v.additions)
    if (id <= 3) parts.push_back(lib.text("role_" + cls + "_" + std::to_string(id)));
  if (std::find(v.additions.begin(), v.additions.end(), kContextAddition) != v.additions.end())
    parts.push_back(lib.text("context_organization"));
  parts.push_back(lib.render("extract_" + cls, {{"article", article.body}}));
  if (std::find(v.additions.begin(), v.additions.end(), kCotAddition) != v.additions.end())
    parts.push_back(lib.text("chain_of_thought"));

  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "\n\n";
    out += parts[i];
  }
  return out;
}

std::string render_structuring_prompt(const PromptLibrary& lib, std::string_view raw_response,
                                      EntityClass cls) {
  if (raw_response.empty()) throw PreconditionError("structuring prompt needs a non-empty response");
  return lib.render("structuring", {{"raw_response", std::string(raw_response)},
                                    {"class_key", std::string(class_key(cls))},
                                    {"class_name", class_word(cls)}});
}

namespace {

std::string numbered(std::span<const std::string> items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

}  // namespace

std::string render_matching_prompt(const PromptLibrary& lib, std::span<const std::string> gold,
                                   std::span<const std::string> predicted) {
  if (gold.empty() || predicted.empty())
    throw PreconditionError("matching prompt needs two non-empty lists");
  return lib.render("matching", {{"gold_list", numbered(gold)}, {"llm_list", numbered(predicted)}});
}

std::string render_verification_prompt(const PromptLibrary& lib, const Article& article,
                                       std::string_view entry, EntityClass cls) {
  return lib.render("verification", {{"article", article.body},
                                     {"entity", std::string(entry)},
                                     {"class_name", class_word(cls)}});
}

std::vector<PromptVariant> enumerate_variants(EntityClass cls,
                                              const std::vector<std::vector<int>>& requested) {
  std::vector<PromptVariant> out;
  for (const auto& ids : requested) {
    PromptVariant v = PromptVariant::make(cls, ids);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
  }
  return out;
}

}  // namespace nerh
