#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoleak/sim.hpp"

namespace topoleak::induction {

inline constexpr std::string_view kHistoryMarker = "[PREVIOUS HISTORY]";
inline constexpr std::string_view kReasoningMarker = "[REASONING OUTPUT]";
inline constexpr std::string_view kTaskMarker = "[TASK]";
inline constexpr std::string_view kDelimiter = "|||";
inline constexpr std::string_view kEscapedDelimiter = "\\|\\|\\|";

struct AdversarialQuery {
  std::string task_text;
  std::string constraint_block;
  std::string full_text;
};

/// Constraint templates in the order they are rendered.
std::vector<std::string> constraint_templates();

/// Throws std::invalid_argument for an empty task text.
AdversarialQuery build_adversarial_query(const sim::TaskSpec& task);

std::string escape_segment(std::string_view s);
std::string unescape_segment(std::string_view s);

/// For each predecessor in order: its history (skipped when empty), then its
/// escaped reasoning output; segments joined by " ||| ".
std::string format_history(const std::vector<std::string>& pred_histories,
                           const std::vector<std::string>& pred_outputs);

/// Decision-agent text for adversarial runs.
std::string compose_final_output(std::string_view history, std::string_view reasoning);

struct FinalOutputSections {
  std::string history;
  std::string reasoning;
};

/// Splits on the two markers. A missing history marker yields an empty
/// history; a missing reasoning marker throws ParseError.
FinalOutputSections parse_final_output(std::string_view text);

enum class DedupPolicy {
  kKeepFirst,  // survivors sit at their first occurrence
  kKeepLast,   // survivors sit at their last occurrence
};

struct RecoverOptions {
  DedupPolicy policy = DedupPolicy::kKeepFirst;
  /// Token-Jaccard at or above which two segments count as duplicates.
  double jaccard_threshold = 0.95;
};

struct RecoveredOutputs {
  std::vector<std::string> items;
  /// pi[k] == k: position of item k in the recovered list.
  std::vector<int> pi;
  std::string source_task;
  /// Number of history segments merged away by deduplication.
  int duplicates_removed = 0;

  nlohmann::json to_json() const;
  static RecoveredOutputs from_json(const nlohmann::json& j);
};

/// Same-item predicate: equal after whitespace normalization, or token
/// Jaccard >= threshold.
bool is_duplicate(std::string_view a, std::string_view b, double jaccard_threshold);

/// Deduplicates `segments` according to `options`.
std::vector<std::string> deduplicate(const std::vector<std::string>& segments,
                                     const RecoverOptions& options, int* removed = nullptr);

/// History segments (trimmed, non-empty, unescaped, deduplicated) followed by
/// the reasoning section. Throws ParseError when nothing can be recovered.
RecoveredOutputs recover_outputs(std::string_view text, const RecoverOptions& options = {});

}  // namespace topoleak::induction
