#include "nerh/matching.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "nerh/errors.hpp"
#include "nerh/text.hpp"

namespace nerh {

using json = nlohmann::json;

json match_to_json(const MatchResult& m) {
  json pairs = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) pairs.push_back({m.gold_side[i], m.predicted_side[i]});
  return pairs;
}

bool satisfies_invariants(const MatchResult& m, std::span<const std::string> gold,
                          std::span<const std::string> predicted) {
  if (m.gold_side.size() != m.predicted_side.size()) return false;
  std::set<std::string> seen_gold, seen_pred;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (std::find(gold.begin(), gold.end(), m.gold_side[i]) == gold.end()) return false;
    if (std::find(predicted.begin(), predicted.end(), m.predicted_side[i]) == predicted.end()) return false;
    if (!seen_gold.insert(m.gold_side[i]).second) return false;
    if (!seen_pred.insert(m.predicted_side[i]).second) return false;
  }
  return true;
}

namespace {

bool is_pairs_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& p : j)
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) return false;
  return true;
}

std::optional<json> first_pairs_array(std::string_view text) {
  std::size_t i = 0;
  while ((i = text.find('[', i)) != std::string_view::npos) {
    if (auto span = text::balanced_span(text, i)) {
      json j = json::parse(text.substr(span->begin, span->end - span->begin), nullptr, false);
      if (!j.is_discarded() && is_pairs_array(j)) return j;
    }
    ++i;
  }
  return std::nullopt;
}

/// Element of `list` equal to `s` after whitespace normalization.
std::optional<std::string> member(std::span<const std::string> list, const std::string& s) {
  const std::string key = text::normalize_whitespace(s);
  for (const auto& e : list)
    if (e == s) return e;
  for (const auto& e : list)
    if (text::normalize_whitespace(e) == key) return e;
  return std::nullopt;
}

}  // namespace

MatchResult parse_match_output(std::string_view text, std::span<const std::string> gold,
                               std::span<const std::string> predicted) {
  MatchResult out;
  out.provenance = MatchProvenance::Llm;
  const auto pairs = first_pairs_array(text);
  if (!pairs) {
    spdlog::warn("matching output has no pairs array; treating as no matches");
    return out;
  }
  const std::set<std::string> gold_set(gold.begin(), gold.end());
  std::set<std::string> used_gold, used_pred;
  for (const auto& p : *pairs) {
    auto g = member(gold, p[0].get<std::string>());
    auto q = member(predicted, p[1].get<std::string>());
    if (!g || !q) continue;
    if (*q != *g && gold_set.count(*q)) continue;
    if (used_gold.count(*g) || used_pred.count(*q)) continue;
    used_gold.insert(*g);
    used_pred.insert(*q);
    out.gold_side.push_back(*g);
    out.predicted_side.push_back(*q);
  }
  return out;
}

LlmMatch llm_match(Gateway& gateway, const PromptLibrary& prompts, std::span<const std::string> gold,
                   std::span<const std::string> predicted, const std::string& model_id,
                   const ChatParams& params) {
  LlmMatch out;
  out.match.provenance = MatchProvenance::Llm;
  if (gold.empty() || predicted.empty()) return out;
  const ChatExchange ex =
      gateway.chat({model_id, render_matching_prompt(prompts, gold, predicted), params, Purpose::Matching});
  out.called = true;
  out.latency_s = ex.latency_s;
  out.raw_response = ex.response_text;
  out.match = parse_match_output(ex.response_text, gold, predicted);
  return out;
}

MatchResult oracle_match(std::span<const std::string> gold, std::span<const std::string> predicted) {
  std::vector<std::optional<std::size_t>> partner(gold.size());
  std::vector<bool> pred_used(predicted.size(), false);
  // Repeated predicted strings share one slot so the result stays one-to-one.
  const auto claim = [&](std::size_t p) {
    for (std::size_t q = 0; q < predicted.size(); ++q)
      if (predicted[q] == predicted[p]) pred_used[q] = true;
  };

  for (std::size_t g = 0; g < gold.size(); ++g) {
    for (std::size_t p = 0; p < predicted.size(); ++p) {
      if (!pred_used[p] && predicted[p] == gold[g]) {
        partner[g] = p;
        claim(p);
        break;
      }
    }
  }
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (partner[g]) continue;
    const std::string key = text::loose_key(gold[g]);
    for (std::size_t p = 0; p < predicted.size(); ++p) {
      if (!pred_used[p] && text::loose_key(predicted[p]) == key) {
        partner[g] = p;
        claim(p);
        break;
      }
    }
  }

  MatchResult out;
  out.provenance = MatchProvenance::Oracle;
  std::set<std::string> used_gold;
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (!partner[g] || !used_gold.insert(gold[g]).second) continue;
    out.gold_side.push_back(gold[g]);
    out.predicted_side.push_back(predicted[*partner[g]]);
  }
  return out;
}

std::vector<std::string> rename(std::span<const std::string> predicted, const MatchResult& match) {
  if (match.gold_side.size() != match.predicted_side.size())
    throw ContractViolation("match sides differ in length");
  std::map<std::string, std::string> mapping;
  for (std::size_t i = 0; i < match.size(); ++i) {
    const auto& from = match.predicted_side[i];
    const auto& to = match.gold_side[i];
    const bool has_from = std::find(predicted.begin(), predicted.end(), from) != predicted.end();
    if (!has_from) {
      if (std::find(predicted.begin(), predicted.end(), to) != predicted.end()) continue;
      throw ContractViolation("match references '" + from + "', which is not in the predicted list");
    }
    mapping.emplace(from, to);
  }

  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : predicted) {
    auto it = mapping.find(e);
    const std::string& v = it == mapping.end() ? e : it->second;
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace nerh
