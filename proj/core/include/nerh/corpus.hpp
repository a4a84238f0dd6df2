#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nerh {

enum class EntityClass { Individual, Organization };

/// "individual" / "organization" (CLI and file spelling).
std::string_view to_string(EntityClass cls);
/// JSON key holding the entity list: "individuals" / "organizations".
std::string_view class_key(EntityClass cls);
/// Accepts the singular or plural spelling, case-insensitive.
EntityClass parse_entity_class(std::string_view name);

inline constexpr EntityClass kAllClasses[] = {EntityClass::Individual,
                                              EntityClass::Organization};

struct Article {
  std::string id;
  std::optional<std::string> title;
  std::string body;
  std::optional<std::string> case_label;
  std::string language = "en";

  bool operator==(const Article&) const = default;
};

struct GoldRecord {
  std::string article_id;
  std::vector<std::string> individuals;
  std::vector<std::string> organizations;

  const std::vector<std::string>& entities(EntityClass cls) const {
    return cls == EntityClass::Individual ? individuals : organizations;
  }
  std::vector<std::string>& entities(EntityClass cls) {
    return cls == EntityClass::Individual ? individuals : organizations;
  }
  bool operator==(const GoldRecord&) const = default;
};

struct Dataset {
  std::vector<Article> articles;
  std::vector<GoldRecord> gold;

  const Article* find_article(std::string_view id) const;
  const GoldRecord* find_gold(std::string_view article_id) const;
  bool operator==(const Dataset&) const = default;
};

struct CorpusStats {
  std::size_t article_count = 0;
  std::size_t sentence_count = 0;
  std::size_t word_count = 0;
  std::size_t char_count = 0;
  /// word_count / sentence_count rounded to one decimal; 0.0 with no sentences.
  double avg_sentence_len_words = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

/// Reads a dataset file. Native documents carry top-level "articles" and
/// "gold" keys; anything else goes through import_record_layout().
/// Throws ParseError (with byte offset) or IntegrityError (with JSON path).
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view json_text, std::string_view source = "<memory>");

/// Import shim for the per-article record layout used by the public release
/// of the benchmark: a JSON array (or id-keyed object) of records, each with
/// the article text and its two entity lists. Recognized keys:
///   text:          "body" | "text" | "article" | "content"
///   individuals:   "individuals" | "persons" | "people"
///   organizations: "organizations" | "organisations" | "orgs"
///   optional:      "id", "title", "case" | "case_label", "language"
/// Key lookup is case-insensitive. Records without an id get "a01", "a02", ...
Dataset import_record_layout(std::string_view json_text, std::string_view source = "<memory>");

/// Checks every invariant enforced by load_dataset; throws IntegrityError.
void validate_dataset(const Dataset& dataset);

/// Serializes in the canonical dataset file layout (2-space indent, trailing
/// newline, keys in declaration order).
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Makes text safe to embed as a JSON string value. Curly quotes become
/// straight quotes, en/em dashes become '-', NBSP becomes a space, LF/CR/TAB
/// become the two-character escapes \n, \r, \t, remaining C0 controls and
/// DEL become \u00XX, and invalid UTF-8 bytes become U+FFFD. Idempotent.
std::string preprocess_text(std::string_view raw);

/// Gold-list normalization used for duplicate detection (trim + collapse
/// internal whitespace, case-sensitive).
std::string normalize_entry(std::string_view entry);

/// Counts with the reference tokenizer:
///   word     maximal run of non-whitespace; the two-character escapes
///            \n \r \t left by preprocess_text count as whitespace
///   sentence segment ended by '.', '!' or '?' (optionally followed by closing
///            quotes/brackets) and then whitespace or end of text; a trailing
///            unterminated segment with at least one word also counts
///   char     Unicode scalar values of the body
/// The sentence rule is abbreviation-blind and therefore approximate.
CorpusStats compute_stats(std::span<const Article> articles);

}  // namespace nerh
