#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerh/llm_gateway.hpp"
#include "nerh/prompt_forge.hpp"

namespace nerh {

enum class MatchProvenance { Llm, Oracle };

/// Positional pairing gold_side[i] <-> predicted_side[i]. One-to-one: no
/// element repeats on either side.
struct MatchResult {
  std::vector<std::string> gold_side;
  std::vector<std::string> predicted_side;
  MatchProvenance provenance = MatchProvenance::Oracle;

  std::size_t size() const { return gold_side.size(); }
  bool empty() const { return gold_side.empty(); }
  bool operator==(const MatchResult&) const = default;
};

/// Pairs-array form: [["gold","predicted"], ...].
nlohmann::json match_to_json(const MatchResult& m);

/// True when sizes agree, every gold_side element is in `gold`, every
/// predicted_side element is in `predicted`, and neither side repeats.
bool satisfies_invariants(const MatchResult& m, std::span<const std::string> gold,
                          std::span<const std::string> predicted);

/// Reads the first pairs array found in `text` and filters it:
///   - both sides must be members of gold / predicted (compared after
///     whitespace normalization; the list's own spelling is kept)
///   - a predicted element that already equals a different gold element is
///     never renamed away, so such pairs are dropped
///   - first pair wins when an element is reused
/// Unparseable text yields an empty result and a logged warning.
MatchResult parse_match_output(std::string_view text, std::span<const std::string> gold,
                               std::span<const std::string> predicted);

struct LlmMatch {
  MatchResult match;
  double latency_s = 0.0;
  std::string raw_response;
  bool called = false;
};

/// No model call when either list is empty.
LlmMatch llm_match(Gateway& gateway, const PromptLibrary& prompts, std::span<const std::string> gold,
                   std::span<const std::string> predicted, const std::string& model_id,
                   const ChatParams& params = {});

/// Deterministic matcher: exact pairs first, then pairs equal under
/// text::loose_key (trim, collapse whitespace, ASCII case-fold, trailing
/// punctuation), greedily in gold order. Output is ordered by gold position.
MatchResult oracle_match(std::span<const std::string> gold, std::span<const std::string> predicted);

/// Replaces each matched predicted element with its gold counterpart, keeps
/// order and drops later duplicates. Pairs whose predicted element is absent
/// but whose gold element is present are treated as already applied; pairs
/// with neither present throw ContractViolation.
std::vector<std::string> rename(std::span<const std::string> predicted, const MatchResult& match);

}  // namespace nerh
