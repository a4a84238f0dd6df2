#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nerh/corpus.hpp"

namespace nerh {

/// Prompt additions, numbered as in the ablation tables:
///   1..3  role preambles (mutually exclusive)
///   4     step-by-step (chain-of-thought) instruction
///   5     organization definition context (organizations only)
inline constexpr int kCotAddition = 4;
inline constexpr int kContextAddition = 5;

int max_addition_id(EntityClass cls);

struct PromptVariant {
  EntityClass entity_class = EntityClass::Individual;
  /// Ascending, unique.
  std::vector<int> additions;

  /// "-" for no additions, otherwise e.g. "1),4),5)".
  std::string label() const;

  /// Validates ids, role exclusivity and sorts. Throws PreconditionError.
  static PromptVariant make(EntityClass cls, std::vector<int> additions);
  /// Inverse of label(). Throws ParseError / PreconditionError.
  static PromptVariant parse(EntityClass cls, std::string_view label);

  bool operator==(const PromptVariant&) const = default;
};

/// Template texts keyed by id (file stem). Placeholders use `{name}` with
/// name in [a-z_]+; any other brace text is literal.
class PromptLibrary {
 public:
  PromptLibrary() = default;
  explicit PromptLibrary(std::map<std::string, std::string> templates);

  /// Loads every *.txt file in `dir`. Throws ParseError if a required
  /// template is missing.
  static PromptLibrary load(const std::filesystem::path& dir);

  /// Template ids that load() insists on.
  static std::vector<std::string> required_ids();

  bool has(const std::string& id) const { return templates_.count(id) != 0; }
  const std::string& text(const std::string& id) const;

  /// Single-pass substitution; bound values are not rescanned. Throws
  /// PreconditionError naming the first unbound placeholder.
  std::string render(const std::string& id, const std::map<std::string, std::string>& bindings) const;

 private:
  std::map<std::string, std::string> templates_;
};

/// Placeholder names occurring in `tmpl`, in order of first appearance.
std::vector<std::string> placeholders(std::string_view tmpl);

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& bindings);

/// Layout: [role preamble] [context paragraph] base prompt with article [step-by-step].
/// The rendered base prompt is always a contiguous substring of the result.
std::string render_extraction_prompt(const PromptLibrary& lib, const Article& article,
                                     const PromptVariant& variant);

std::string render_structuring_prompt(const PromptLibrary& lib, std::string_view raw_response,
                                      EntityClass cls);

/// Both lists must be non-empty; items are listed with 1-based indices.
std::string render_matching_prompt(const PromptLibrary& lib, std::span<const std::string> gold,
                                   std::span<const std::string> predicted);

std::string render_verification_prompt(const PromptLibrary& lib, const Article& article,
                                       std::string_view entry, EntityClass cls);

/// Canonical, de-duplicated variants in first-seen order.
std::vector<PromptVariant> enumerate_variants(EntityClass cls,
                                              const std::vector<std::vector<int>>& requested);

}  // namespace nerh
