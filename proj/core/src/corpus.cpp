#include "nerh/corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "nerh/errors.hpp"
#include "nerh/text.hpp"

namespace nerh {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(EntityClass cls) {
  return cls == EntityClass::Individual ? "individual" : "organization";
}

std::string_view class_key(EntityClass cls) {
  return cls == EntityClass::Individual ? "individuals" : "organizations";
}

EntityClass parse_entity_class(std::string_view name) {
  const std::string n = text::ascii_casefold(name);
  if (n == "individual" || n == "individuals") return EntityClass::Individual;
  if (n == "organization" || n == "organizations") return EntityClass::Organization;
  throw ParseError("unknown entity class '" + std::string(name) + "'");
}

const Article* Dataset::find_article(std::string_view id) const {
  for (const auto& a : articles)
    if (a.id == id) return &a;
  return nullptr;
}

const GoldRecord* Dataset::find_gold(std::string_view article_id) const {
  for (const auto& g : gold)
    if (g.article_id == article_id) return &g;
  return nullptr;
}

std::string normalize_entry(std::string_view entry) { return text::normalize_whitespace(entry); }

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(std::string_view text, std::string_view source) {
  try {
    return json::parse(text::strip_bom(text));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

std::string where(std::string_view source, const std::string& path) {
  return std::string(source) + ": " + path;
}

std::string require_string(const json& obj, const char* key, std::string_view source,
                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ParseError(where(source, path + "." + key) + ": expected string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key,
                                           std::string_view source, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(where(source, path + "." + key) + ": expected string or null");
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& value, std::string_view source,
                                     const std::string& path) {
  if (!value.is_array()) throw ParseError(where(source, path) + ": expected array of strings");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!value[i].is_string())
      throw ParseError(where(source, path + "[" + std::to_string(i) + "]") + ": expected string");
    out.push_back(normalize_entry(value[i].get<std::string>()));
  }
  return out;
}

void check_gold_list(const std::vector<std::string>& list, const std::string& path) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = path + "[" + std::to_string(i) + "]";
    if (list[i].empty()) throw IntegrityError(at + ": empty entry");
    if (!seen.insert(normalize_entry(list[i])).second)
      throw IntegrityError(at + ": duplicate entry '" + list[i] + "'");
  }
}

Dataset finish(Dataset ds, std::string_view source) {
  for (auto& a : ds.articles) a.body = preprocess_text(a.body);
  try {
    validate_dataset(ds);
  } catch (const IntegrityError& e) {
    throw IntegrityError(std::string(source) + ": " + e.what());
  }
  return ds;
}

const json* find_key_ci(const json& obj, std::initializer_list<std::string_view> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string k = text::ascii_casefold(it.key());
    for (auto want : keys)
      if (k == want) return &it.value();
  }
  return nullptr;
}

}  // namespace

void validate_dataset(const Dataset& ds) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < ds.articles.size(); ++i) {
    const auto& a = ds.articles[i];
    const std::string at = "articles[" + std::to_string(i) + "]";
    if (a.id.empty()) throw IntegrityError(at + ".id: empty id");
    if (!ids.insert(a.id).second) throw IntegrityError(at + ".id: duplicate article id '" + a.id + "'");
    // Bodies are stored preprocessed, so "\n" escapes alone still count as empty.
    if (compute_stats(std::span<const Article>(&a, 1)).word_count == 0)
      throw IntegrityError(at + ".body: empty body");
    for (char c : a.body)
      if (static_cast<unsigned char>(c) < 0x20 || c == 0x7F)
        throw IntegrityError(at + ".body: raw control character");
  }
  std::set<std::string> covered;
  for (std::size_t i = 0; i < ds.gold.size(); ++i) {
    const auto& g = ds.gold[i];
    const std::string at = "gold[" + std::to_string(i) + "]";
    if (!ids.count(g.article_id))
      throw IntegrityError(at + ".article_id: unknown article id '" + g.article_id + "'");
    if (!covered.insert(g.article_id).second)
      throw IntegrityError(at + ".article_id: second gold record for '" + g.article_id + "'");
    check_gold_list(g.individuals, at + ".individuals");
    check_gold_list(g.organizations, at + ".organizations");
  }
  for (const auto& a : ds.articles)
    if (!covered.count(a.id)) throw IntegrityError("article '" + a.id + "' has no gold record");
}

Dataset parse_dataset(std::string_view json_text, std::string_view source) {
  const json doc = parse_json(json_text, source);
  if (!doc.is_object() || !doc.contains("articles")) return import_record_layout(json_text, source);

  Dataset ds;
  const json& articles = doc.at("articles");
  if (!articles.is_array()) throw ParseError(where(source, "articles") + ": expected array");
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const std::string at = "articles[" + std::to_string(i) + "]";
    const json& a = articles[i];
    if (!a.is_object()) throw ParseError(where(source, at) + ": expected object");
    Article art;
    art.id = require_string(a, "id", source, at);
    art.title = optional_string(a, "title", source, at);
    art.body = require_string(a, "body", source, at);
    art.case_label = optional_string(a, "case_label", source, at);
    art.language = optional_string(a, "language", source, at).value_or("en");
    ds.articles.push_back(std::move(art));
  }

  const auto gold_it = doc.find("gold");
  if (gold_it == doc.end()) throw ParseError(where(source, "gold") + ": missing");
  if (!gold_it->is_array()) throw ParseError(where(source, "gold") + ": expected array");
  for (std::size_t i = 0; i < gold_it->size(); ++i) {
    const std::string at = "gold[" + std::to_string(i) + "]";
    const json& g = (*gold_it)[i];
    if (!g.is_object()) throw ParseError(where(source, at) + ": expected object");
    GoldRecord rec;
    rec.article_id = require_string(g, "article_id", source, at);
    for (EntityClass cls : kAllClasses) {
      const std::string key(class_key(cls));
      auto it = g.find(key);
      if (it == g.end()) throw ParseError(where(source, at + "." + key) + ": missing");
      rec.entities(cls) = string_list(*it, source, at + "." + key);
    }
    ds.gold.push_back(std::move(rec));
  }
  return finish(std::move(ds), source);
}

Dataset import_record_layout(std::string_view json_text, std::string_view source) {
  const json doc = parse_json(json_text, source);
  std::vector<std::pair<std::optional<std::string>, const json*>> records;
  if (doc.is_array()) {
    for (const auto& r : doc) records.emplace_back(std::nullopt, &r);
  } else if (doc.is_object()) {
    for (auto it = doc.begin(); it != doc.end(); ++it) records.emplace_back(it.key(), &it.value());
  } else {
    throw ParseError(std::string(source) + ": expected an array or object of article records");
  }

  Dataset ds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& [key, rec] = records[i];
    const std::string at = "[" + std::to_string(i) + "]";
    if (!rec->is_object()) throw ParseError(where(source, at) + ": expected object");

    Article art;
    if (const json* id = find_key_ci(*rec, {"id", "article_id"}); id && !id->is_null()) {
      art.id = id->is_string() ? id->get<std::string>() : id->dump();
    } else if (key) {
      art.id = *key;
    } else {
      const std::size_t n = i + 1;
      art.id = (n < 10 ? "a0" : "a") + std::to_string(n);
    }
    const json* body = find_key_ci(*rec, {"body", "text", "article", "content"});
    if (!body || !body->is_string()) throw ParseError(where(source, at) + ": no article text field");
    art.body = body->get<std::string>();
    if (const json* t = find_key_ci(*rec, {"title"}); t && t->is_string()) art.title = t->get<std::string>();
    if (const json* c = find_key_ci(*rec, {"case_label", "case"}); c && c->is_string())
      art.case_label = c->get<std::string>();
    if (const json* l = find_key_ci(*rec, {"language", "lang"}); l && l->is_string())
      art.language = l->get<std::string>();

    GoldRecord gold;
    gold.article_id = art.id;
    const json* ind = find_key_ci(*rec, {"individuals", "persons", "people"});
    const json* org = find_key_ci(*rec, {"organizations", "organisations", "orgs"});
    if (!ind || !org) throw ParseError(where(source, at) + ": missing entity lists");
    gold.individuals = string_list(*ind, source, at + ".individuals");
    gold.organizations = string_list(*org, source, at + ".organizations");

    ds.articles.push_back(std::move(art));
    ds.gold.push_back(std::move(gold));
  }
  return finish(std::move(ds), source);
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

std::string serialize_dataset(const Dataset& ds) {
  ordered_json doc = ordered_json::object();
  doc["articles"] = ordered_json::array();
  for (const auto& a : ds.articles) {
    ordered_json o;
    o["id"] = a.id;
    o["title"] = a.title ? ordered_json(*a.title) : ordered_json(nullptr);
    o["body"] = a.body;
    o["case_label"] = a.case_label ? ordered_json(*a.case_label) : ordered_json(nullptr);
    o["language"] = a.language;
    doc["articles"].push_back(std::move(o));
  }
  doc["gold"] = ordered_json::array();
  for (const auto& g : ds.gold) {
    ordered_json o;
    o["article_id"] = g.article_id;
    o["individuals"] = g.individuals;
    o["organizations"] = g.organizations;
    doc["gold"].push_back(std::move(o));
  }
  return doc.dump(2, ' ', false, ordered_json::error_handler_t::replace) + "\n";
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const std::string body = serialize_dataset(ds);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << body;
}

std::string preprocess_text(std::string_view raw) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    const auto step = text::decode_utf8(raw, i);
    i += step.length;
    const char32_t cp = step.code_point;
    switch (cp) {
      case U'\u201C':
      case U'\u201D':
      case U'\u201E':
      case U'\u201F':
        out.push_back('"');
        continue;
      case U'\u2018':
      case U'\u2019':
      case U'\u201A':
      case U'\u201B':
        out.push_back('\'');
        continue;
      case U'\u2013':
      case U'\u2014':
        out.push_back('-');
        continue;
      case U'\u00A0':
        out.push_back(' ');
        continue;
      case U'\n':
        out += "\\n";
        continue;
      case U'\r':
        out += "\\r";
        continue;
      case U'\t':
        out += "\\t";
        continue;
      default:
        break;
    }
    if (cp < 0x20 || cp == 0x7F) {
      out += "\\u00";
      out.push_back(kHex[(cp >> 4) & 0xF]);
      out.push_back(kHex[cp & 0xF]);
      continue;
    }
    text::append_utf8(out, cp);
  }
  return out;
}

namespace {

bool is_escape_space(std::string_view s, std::size_t i) {
  return s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == 'n' || s[i + 1] == 'r' || s[i + 1] == 't');
}

/// Strips closing quotes and brackets from the end of a token.
std::string_view drop_closers(std::string_view w) {
  constexpr std::string_view kAsciiClosers = "\"')]}";
  for (;;) {
    if (!w.empty() && kAsciiClosers.find(w.back()) != std::string_view::npos) {
      w.remove_suffix(1);
      continue;
    }
    // U+201D, U+2019 (3 bytes) and U+00BB (2 bytes)
    if (w.size() >= 3 && (w.ends_with("\xE2\x80\x9D") || w.ends_with("\xE2\x80\x99"))) {
      w.remove_suffix(3);
      continue;
    }
    if (w.size() >= 2 && w.ends_with("\xC2\xBB")) {
      w.remove_suffix(2);
      continue;
    }
    return w;
  }
}

bool ends_sentence(std::string_view word) {
  const std::string_view core = drop_closers(word);
  return !core.empty() && (core.back() == '.' || core.back() == '!' || core.back() == '?');
}

void count_body(std::string_view body, CorpusStats& st) {
  st.char_count += text::count_code_points(body);
  bool open_segment = false;
  std::size_t i = 0;
  while (i < body.size()) {
    if (text::is_ascii_space(body[i])) {
      ++i;
      continue;
    }
    if (is_escape_space(body, i)) {
      i += 2;
      continue;
    }
    const std::size_t start = i;
    while (i < body.size() && !text::is_ascii_space(body[i]) && !is_escape_space(body, i)) ++i;
    const std::string_view word = body.substr(start, i - start);
    ++st.word_count;
    if (ends_sentence(word)) {
      ++st.sentence_count;
      open_segment = false;
    } else {
      open_segment = true;
    }
  }
  if (open_segment) ++st.sentence_count;
}

}  // namespace

CorpusStats compute_stats(std::span<const Article> articles) {
  CorpusStats st;
  st.article_count = articles.size();
  for (const auto& a : articles) count_body(a.body, st);
  if (st.sentence_count > 0) {
    const double avg = static_cast<double>(st.word_count) / static_cast<double>(st.sentence_count);
    st.avg_sentence_len_words = std::round(avg * 10.0) / 10.0;
  }
  return st;
}

}  // namespace nerh
