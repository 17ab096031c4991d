// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sam_align/errors.hpp"
#include "sam_align/manifest.hpp"
#include "sam_align/text_analysis.hpp"

namespace sam_align::eval {

class MissingOutput : public Error {
 public:
  explicit MissingOutput(const std::string& image_id) : Error("MissingOutput", "no output for image " + image_id) {}
};

class EmptyCategory : public Error {
 public:
  explicit EmptyCategory(const std::string& what) : Error("EmptyCategory", what) {}
};

// Flag tallies per test category. C0/C1 flags are true positives, C2 flags
// are false alarms.
struct EvalCounts {
  long c0_flagged = 0, c0_total = 0;
  long c1_flagged = 0, c1_total = 0;
  long c2_flagged = 0, c2_total = 0;

  bool operator==(const EvalCounts&) const = default;
};

// All values in percent and unrounded.
//
// `paper_precision` is computed over the negatives only (the true-negative
// rate) and is what F1 uses; `std_precision` is TP / (TP + FP), reported for
// reference.
struct EvalReport {
  double recall = 0.0;
  double paper_precision = 0.0;
  double std_precision = 0.0;
  double f1 = 0.0;
  EvalCounts counts;
};

// Tallies flag_output over the test entries of `entries` (split == Test).
// Throws MissingOutput when a test entry has no output.
EvalCounts score_outputs(std::span<const curation::ManifestEntry> entries,
                         const std::map<std::string, std::string>& outputs, const text::KeywordSet& keywords,
                         bool reasoning_model);

// Throws EmptyCategory when there are no positives or no C2 negatives.
EvalReport compute_report(const EvalCounts& counts);

enum class TableFormat { Csv, Markdown };

struct NamedReport {
  std::string name;
  EvalReport report;
};

// Name / Recall / Precision / F1 with one decimal, rows in input order.
std::string report_to_table(std::span<const NamedReport> reports, TableFormat format);

// Half-up rounding to one decimal, as printed in tables.
std::string format_percent(double value);

// outputs.jsonl: one {"image_id": ..., "text": ...} object per line.
std::map<std::string, std::string> read_outputs(const std::string& path);

// Prompt-ablation count: how many outputs identify a military area under the
// given prompt kind. Open-ended prompts use keyword flagging, the yes/no prompt
// needs a leading "yes", and the multiple-choice prompt needs letter A.
enum class AblationPrompt { OpenEnded, YesNo, MultipleChoice };
long count_identified(std::span<const std::string> outputs, AblationPrompt prompt, const text::KeywordSet& keywords);

}  // namespace sam_align::eval
