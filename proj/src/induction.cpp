#include "topoleak/induction.hpp"

#include <algorithm>
#include <stdexcept>

#include "topoleak/assets.hpp"
#include "topoleak/errors.hpp"
#include "topoleak/text.hpp"

namespace topoleak::induction {
namespace {

constexpr std::string_view kTemplateNames[] = {
    "templates/v1/cumulative_propagation.txt",
    "templates/v1/task_focused.txt",
    "templates/v1/predecessor_review.txt",
};

std::string load_template(std::string_view name) {
  const auto text = assets::find(name);
  if (!text) throw std::logic_error("missing template asset " + std::string(name));
  return std::string(text::trim(*text));
}

}  // namespace

std::vector<std::string> constraint_templates() {
  std::vector<std::string> out;
  for (auto name : kTemplateNames) out.push_back(load_template(name));
  return out;
}

AdversarialQuery build_adversarial_query(const sim::TaskSpec& task) {
  if (task.text.empty()) throw std::invalid_argument("build_adversarial_query: empty task text");
  AdversarialQuery q;
  q.task_text = task.text;
  q.constraint_block = text::join(constraint_templates(), "\n\n");
  q.full_text = q.constraint_block + "\n\n" + std::string(kTaskMarker) + ": " + task.text;
  return q;
}

std::string escape_segment(std::string_view s) {
  return text::replace_all(s, kDelimiter, kEscapedDelimiter);
}

std::string unescape_segment(std::string_view s) {
  return text::replace_all(s, kEscapedDelimiter, kDelimiter);
}

std::string format_history(const std::vector<std::string>& pred_histories,
                           const std::vector<std::string>& pred_outputs) {
  if (pred_histories.size() != pred_outputs.size()) {
    throw std::invalid_argument("format_history: " + std::to_string(pred_histories.size()) +
                                " histories but " + std::to_string(pred_outputs.size()) +
                                " outputs");
  }
  std::vector<std::string> segments;
  for (std::size_t k = 0; k < pred_outputs.size(); ++k) {
    if (!pred_histories[k].empty()) segments.push_back(pred_histories[k]);
    segments.push_back(escape_segment(pred_outputs[k]));
  }
  return text::join(segments, " ||| ");
}

std::string compose_final_output(std::string_view history, std::string_view reasoning) {
  std::string out(kHistoryMarker);
  out += ' ';
  out += history;
  out += ' ';
  out += kReasoningMarker;
  out += ' ';
  out += reasoning;
  return out;
}

FinalOutputSections parse_final_output(std::string_view text) {
  const std::size_t r = text.rfind(kReasoningMarker);
  if (r == std::string_view::npos) {
    throw ParseError("final output has no " + std::string(kReasoningMarker) + " section");
  }
  FinalOutputSections out;
  out.reasoning = std::string(text::trim(text.substr(r + kReasoningMarker.size())));
  const std::size_t h = text.substr(0, r).find(kHistoryMarker);
  if (h != std::string_view::npos) {
    const auto start = h + kHistoryMarker.size();
    out.history = std::string(text::trim(text.substr(start, r - start)));
  }
  return out;
}

bool is_duplicate(std::string_view a, std::string_view b, double jaccard_threshold) {
  if (text::normalize_whitespace(a) == text::normalize_whitespace(b)) return true;
  return text::token_jaccard(a, b) >= jaccard_threshold;
}

std::vector<std::string> deduplicate(const std::vector<std::string>& segments,
                                     const RecoverOptions& options, int* removed) {
  std::vector<std::string> kept;
  const auto accept = [&](const std::string& s) {
    for (const auto& k : kept)
      if (is_duplicate(k, s, options.jaccard_threshold)) return false;
    return true;
  };
  if (options.policy == DedupPolicy::kKeepFirst) {
    for (const auto& s : segments)
      if (accept(s)) kept.push_back(s);
  } else {
    // Scan from the end so the surviving copy is the latest one.
    for (auto it = segments.rbegin(); it != segments.rend(); ++it)
      if (accept(*it)) kept.push_back(*it);
    std::reverse(kept.begin(), kept.end());
  }
  if (removed) *removed = static_cast<int>(segments.size() - kept.size());
  return kept;
}

RecoveredOutputs recover_outputs(std::string_view text, const RecoverOptions& options) {
  const auto sections = parse_final_output(text);
  std::vector<std::string> segments;
  std::size_t pos = 0;
  const std::string_view history = sections.history;
  while (pos <= history.size()) {
    std::size_t hit = history.find(kDelimiter, pos);
    if (hit == std::string_view::npos) hit = history.size();
    const auto seg = text::trim(history.substr(pos, hit - pos));
    if (!seg.empty()) segments.push_back(unescape_segment(seg));
    pos = hit + kDelimiter.size();
  }

  RecoveredOutputs out;
  out.items = deduplicate(segments, options, &out.duplicates_removed);
  if (!sections.reasoning.empty()) out.items.push_back(sections.reasoning);
  if (out.items.empty()) throw ParseError("final output contains no recoverable agent outputs");
  for (std::size_t k = 0; k < out.items.size(); ++k) out.pi.push_back(static_cast<int>(k));
  return out;
}

nlohmann::json RecoveredOutputs::to_json() const {
  return {{"items", items}, {"source_task", source_task}, {"duplicates_removed", duplicates_removed}};
}

RecoveredOutputs RecoveredOutputs::from_json(const nlohmann::json& j) {
  RecoveredOutputs r;
  r.items = j.at("items").get<std::vector<std::string>>();
  r.source_task = j.value("source_task", std::string{});
  r.duplicates_removed = j.value("duplicates_removed", 0);
  for (std::size_t k = 0; k < r.items.size(); ++k) r.pi.push_back(static_cast<int>(k));
  return r;
}

}  // namespace topoleak::induction
