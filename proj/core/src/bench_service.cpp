#include "nerh/bench_service.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "nerh/errors.hpp"
#include "nerh/text.hpp"

namespace nerh {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(EntryStatus s) {
  switch (s) {
    case EntryStatus::Proposed: return "proposed";
    case EntryStatus::Accepted: return "accepted";
    case EntryStatus::Rejected: return "rejected";
    case EntryStatus::Added: return "added";
  }
  return "proposed";
}

std::string_view to_string(EntrySource s) {
  switch (s) {
    case EntrySource::Baseline: return "baseline";
    case EntrySource::Llm: return "llm";
    case EntrySource::Human: return "human";
  }
  return "human";
}

EntryStatus parse_entry_status(std::string_view s) {
  if (s == "proposed") return EntryStatus::Proposed;
  if (s == "accepted") return EntryStatus::Accepted;
  if (s == "rejected") return EntryStatus::Rejected;
  if (s == "added") return EntryStatus::Added;
  throw ValidationError("unknown entry status '" + std::string(s) + "'");
}

EntrySource parse_entry_source(std::string_view s) {
  if (s == "baseline") return EntrySource::Baseline;
  if (s == "llm") return EntrySource::Llm;
  if (s == "human") return EntrySource::Human;
  throw ValidationError("unknown entry source '" + std::string(s) + "'");
}

json draft_to_json(const AnnotationDraft& d) {
  json entries = json::array();
  for (const auto& e : d.entries)
    entries.push_back({{"text", e.text},
                       {"status", std::string(to_string(e.status))},
                       {"source", std::string(to_string(e.source))},
                       {"note", e.note}});
  return {{"article_id", d.article_id},
          {"entity_class", std::string(to_string(d.entity_class))},
          {"entries", std::move(entries)},
          {"version", d.version}};
}

AnnotationDraft draft_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("draft must be a JSON object");
  AnnotationDraft d;
  try {
    d.article_id = j.value("article_id", std::string());
    if (j.contains("entity_class")) d.entity_class = parse_entity_class(j["entity_class"].get<std::string>());
    d.version = j.value("version", 0);
    for (const auto& e : j.value("entries", json::array())) {
      DraftEntry entry;
      entry.text = e.at("text").get<std::string>();
      entry.status = parse_entry_status(e.value("status", std::string("proposed")));
      entry.source = parse_entry_source(e.value("source", std::string("human")));
      entry.note = e.value("note", std::string());
      d.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed draft: ") + e.what());
  } catch (const ParseError& e) {
    throw ValidationError(e.what());
  }
  return d;
}

void validate_draft(const AnnotationDraft& d) {
  if (d.version < 0) throw ValidationError("negative draft version");
  for (std::size_t i = 0; i < d.entries.size(); ++i) {
    const auto& e = d.entries[i];
    const bool kept = e.status == EntryStatus::Accepted || e.status == EntryStatus::Added;
    if (kept && text::normalize_whitespace(e.text).empty())
      throw ValidationError("entries[" + std::to_string(i) + "]: " + std::string(to_string(e.status)) +
                            " entry has empty text");
  }
}

namespace {

std::string path_safe(std::string_view id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '-' || c == '_') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string version_file(int v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%06d.json", v);
  return buf;
}

}  // namespace

DraftStore::DraftStore(fs::path root) : root_(std::move(root)) {}

fs::path DraftStore::stream_dir(const std::string& article_id, EntityClass cls) const {
  return root_ / path_safe(article_id) / std::string(to_string(cls));
}

std::mutex& DraftStore::stream_mutex(const std::string& article_id, EntityClass cls) {
  std::lock_guard lock(table_mutex_);
  auto& slot = stream_mutexes_[article_id + '\n' + std::string(to_string(cls))];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

int DraftStore::current_version(const std::string& article_id, EntityClass cls) const {
  const fs::path dir = stream_dir(article_id, cls);
  if (!fs::is_directory(dir)) return 0;
  int best = 0;
  for (const auto& f : fs::directory_iterator(dir)) {
    const std::string name = f.path().filename().string();
    if (name.size() != 12 || name[0] != 'v' || f.path().extension() != ".json") continue;
    best = std::max(best, std::stoi(name.substr(1, 6)));
  }
  return best;
}

std::optional<AnnotationDraft> DraftStore::current(const std::string& article_id, EntityClass cls) const {
  const int v = current_version(article_id, cls);
  if (v == 0) return std::nullopt;
  std::ifstream in(stream_dir(article_id, cls) / version_file(v), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  AnnotationDraft d = draft_from_json(json::parse(ss.str()));
  d.version = v;
  return d;
}

int DraftStore::put(const AnnotationDraft& draft) {
  std::lock_guard lock(stream_mutex(draft.article_id, draft.entity_class));
  const int current = current_version(draft.article_id, draft.entity_class);
  if (draft.version != current)
    throw VersionConflict("draft for '" + draft.article_id + "' (" + std::string(to_string(draft.entity_class)) +
                              ") is at version " + std::to_string(current) + ", edit was based on version " +
                              std::to_string(draft.version),
                          current);
  AnnotationDraft stored = draft;
  stored.version = current + 1;
  const fs::path dir = stream_dir(draft.article_id, draft.entity_class);
  fs::create_directories(dir);
  const fs::path final_path = dir / version_file(stored.version);
  fs::path tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << draft_to_json(stored).dump(2) << '\n';
  }
  fs::rename(tmp, final_path);
  return stored.version;
}

BenchService::BenchService(Dataset dataset, fs::path root, PreannotationSource source, Gateway* gateway,
                           const PromptLibrary* prompts)
    : dataset_(std::move(dataset)),
      root_(std::move(root)),
      source_(std::move(source)),
      gateway_(gateway),
      prompts_(prompts),
      store_(root_ / "drafts") {}

const Article& BenchService::article(const std::string& id) const {
  const Article* a = dataset_.find_article(id);
  if (!a) throw NotFound("unknown article '" + id + "'");
  return *a;
}

AnnotationDraft BenchService::get_preannotations(const std::string& article_id, EntityClass cls) const {
  const Article& a = article(article_id);
  if (!source_.configured()) throw PreconditionError("no pre-annotation source configured");

  AnnotationDraft d;
  d.article_id = article_id;
  d.entity_class = cls;
  std::vector<std::string> proposed;
  EntrySource origin = EntrySource::Baseline;
  if (!source_.predictions.empty()) {
    for (const auto& p : source_.predictions) {
      if (p.article_id == article_id && p.entity_class == cls) {
        proposed = p.entities;
        break;
      }
    }
  } else {
    if (!gateway_ || !prompts_) throw PreconditionError("pipeline pre-annotation needs a gateway and prompts");
    Extractor extractor(*gateway_, *prompts_, {source_.structuring_model, {}});
    proposed = extractor.extract(a, PromptVariant::make(cls, source_.variant), source_.extraction_model).entities;
    origin = EntrySource::Llm;
  }
  for (auto& text : proposed) d.entries.push_back({std::move(text), EntryStatus::Proposed, origin, {}});
  return d;
}

AnnotationDraft BenchService::get_draft(const std::string& article_id, EntityClass cls) const {
  article(article_id);
  if (auto stored = store_.current(article_id, cls)) return *stored;
  return get_preannotations(article_id, cls);
}

int BenchService::put_draft(const std::string& article_id, EntityClass cls, const AnnotationDraft& draft) {
  article(article_id);
  if (!draft.article_id.empty() && draft.article_id != article_id)
    throw ValidationError("draft article_id does not match the request path");
  if (draft.entity_class != cls) throw ValidationError("draft entity_class does not match the request path");
  validate_draft(draft);
  AnnotationDraft d = draft;
  d.article_id = article_id;
  d.entity_class = cls;
  return store_.put(d);
}

namespace {

Verdict parse_verdict(const std::string& entry, const std::string& response) {
  std::size_t i = 0;
  while ((i = response.find('{', i)) != std::string::npos) {
    if (auto span = text::balanced_span(response, i)) {
      json j = json::parse(response.substr(span->begin, span->end - span->begin), nullptr, false);
      if (!j.is_discarded() && j.is_object() && j.contains("verdict") && j["verdict"].is_string()) {
        const std::string v = text::ascii_casefold(j["verdict"].get<std::string>());
        const std::string note = j.contains("note") && j["note"].is_string() ? j["note"].get<std::string>() : "";
        if (v == "confirm") return {entry, "confirm", note};
        return {entry, "flag", note.empty() ? "model verdict: " + v : note};
      }
    }
    ++i;
  }
  return {entry, "flag", "unparseable verification response"};
}

}  // namespace

std::vector<Verdict> BenchService::verify_draft(const std::string& article_id, EntityClass cls,
                                                const std::string& model_id) const {
  const Article& a = article(article_id);
  auto draft = store_.current(article_id, cls);
  if (!draft) throw NotFound("no stored draft for '" + article_id + "' (" + std::string(to_string(cls)) + ")");

  std::vector<Verdict> out;
  for (const auto& e : draft->entries) {
    if (e.status != EntryStatus::Accepted && e.status != EntryStatus::Added) continue;
    const std::string name = text::normalize_whitespace(e.text);
    if (a.body.find(name) == std::string::npos) {
      out.push_back({name, "flag", "not found verbatim in the article text"});
      continue;
    }
    if (!gateway_ || !prompts_) throw PreconditionError("verification needs a gateway and prompts");
    const ChatExchange ex =
        gateway_->chat({model_id, render_verification_prompt(*prompts_, a, name, cls), {}, Purpose::Verification});
    out.push_back(parse_verdict(name, ex.response_text));
  }
  return out;
}

Dataset BenchService::export_gold(const std::string& dataset_name) const {
  if (dataset_name.empty() ||
      dataset_name.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789._-") !=
          std::string::npos ||
      dataset_name.front() == '.')
    throw ValidationError("dataset name must be non-empty and use only letters, digits, '.', '_' or '-'");

  Dataset out;
  std::vector<std::string> unreviewed;
  for (const auto& a : dataset_.articles) {
    GoldRecord rec;
    rec.article_id = a.id;
    for (EntityClass cls : kAllClasses) {
      auto d = store_.current(a.id, cls);
      if (!d) {
        unreviewed.push_back(a.id + "/" + std::string(to_string(cls)));
        continue;
      }
      std::unordered_set<std::string> seen;
      for (const auto& e : d->entries) {
        if (e.status != EntryStatus::Accepted && e.status != EntryStatus::Added) continue;
        std::string n = normalize_entry(e.text);
        if (seen.insert(n).second) rec.entities(cls).push_back(std::move(n));
      }
    }
    out.articles.push_back(a);
    out.gold.push_back(std::move(rec));
  }
  if (!unreviewed.empty()) {
    std::string msg = "unreviewed articles:";
    for (const auto& u : unreviewed) msg += " " + u;
    throw IntegrityError(msg);
  }
  validate_dataset(out);
  save_dataset(out, root_ / "exports" / (dataset_name + ".json"));
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json article_summary(const Article& a) {
  return {{"id", a.id},
          {"title", a.title ? json(*a.title) : json(nullptr)},
          {"case_label", a.case_label ? json(*a.case_label) : json(nullptr)},
          {"language", a.language}};
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFound& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const VersionConflict& e) {
      send_json(res, 409, {{"code", "conflict"}, {"message", e.what()}, {"current_version", e.current_version()}});
    } catch (const IntegrityError& e) {
      send_error(res, 409, "unreviewed", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, "invalid", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const PreconditionError& e) {
      send_error(res, 412, "precondition", e.what());
    } catch (const MissingFixture& e) {
      send_error(res, 502, "gateway", e.what());
    } catch (const TransportError& e) {
      send_error(res, 502, "gateway", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

EntityClass class_param(const std::string& s) {
  try {
    return parse_entity_class(s);
  } catch (const ParseError& e) {
    throw NotFound(e.what());
  }
}

}  // namespace

void mount_routes(httplib::Server& server, BenchService& service, std::string default_verify_model,
                  const std::optional<fs::path>& static_dir) {
  server.Get("/articles", guarded([&service](const httplib::Request&, httplib::Response& res) {
               json arr = json::array();
               for (const auto& a : service.dataset().articles) arr.push_back(article_summary(a));
               send_json(res, 200, arr);
             }));

  server.Get(R"(/articles/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const Article* a = service.dataset().find_article(req.matches[1].str());
               if (!a) throw NotFound("unknown article '" + req.matches[1].str() + "'");
               json j = article_summary(*a);
               j["body"] = a->body;
               send_json(res, 200, j);
             }));

  server.Get(R"(/articles/([^/]+)/draft/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const auto d = service.get_draft(req.matches[1].str(), class_param(req.matches[2].str()));
               send_json(res, 200, draft_to_json(d));
             }));

  server.Put(R"(/articles/([^/]+)/draft/([^/]+))",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1].str();
               const EntityClass cls = class_param(req.matches[2].str());
               json body = json::parse(req.body);
               if (!body.contains("entity_class")) body["entity_class"] = std::string(to_string(cls));
               const int v = service.put_draft(id, cls, draft_from_json(body));
               send_json(res, 200, {{"article_id", id}, {"entity_class", std::string(to_string(cls))}, {"version", v}});
             }));

  server.Post(R"(/articles/([^/]+)/verify/([^/]+))",
              guarded([&service, model = std::move(default_verify_model)](const httplib::Request& req,
                                                                          httplib::Response& res) {
                std::string model_id = model;
                if (!req.body.empty()) {
                  const json body = json::parse(req.body);
                  model_id = body.value("model_id", model_id);
                }
                json arr = json::array();
                for (const auto& v : service.verify_draft(req.matches[1].str(), class_param(req.matches[2].str()), model_id))
                  arr.push_back({{"entry", v.entry}, {"verdict", v.verdict}, {"note", v.note}});
                send_json(res, 200, arr);
              }));

  server.Post("/export", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = req.body.empty() ? json::object() : json::parse(req.body);
                const Dataset ds = service.export_gold(body.value("name", std::string("gold")));
                res.status = 200;
                res.set_content(serialize_dataset(ds), "application/json");
              }));

  if (static_dir) server.set_mount_point("/", static_dir->string());
}

}  // namespace nerh
