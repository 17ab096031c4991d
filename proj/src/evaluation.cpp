// SPDX-License-Identifier: Apache-2.0

#include "sam_align/evaluation.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace sam_align::eval {
using nlohmann::json;

EvalCounts score_outputs(std::span<const curation::ManifestEntry> entries,
                         const std::map<std::string, std::string>& outputs, const text::KeywordSet& keywords,
                         bool reasoning_model) {
  EvalCounts counts;
  for (const auto& e : entries) {
    if (e.split != curation::Split::Test || !e.category) continue;
    const auto it = outputs.find(e.id);
    if (it == outputs.end()) throw MissingOutput(e.id);
    const long flagged = text::flag_output(it->second, keywords, reasoning_model) ? 1 : 0;
    switch (*e.category) {
      case curation::Category::C0:
        counts.c0_flagged += flagged;
        ++counts.c0_total;
        break;
      case curation::Category::C1:
        counts.c1_flagged += flagged;
        ++counts.c1_total;
        break;
      case curation::Category::C2:
        counts.c2_flagged += flagged;
        ++counts.c2_total;
        break;
    }
  }
  return counts;
}

EvalReport compute_report(const EvalCounts& c) {
  const long positives = c.c0_total + c.c1_total;
  if (positives <= 0) throw EmptyCategory("no positive (C0/C1) test images");
  if (c.c2_total <= 0) throw EmptyCategory("no negative (C2) test images");
  if (c.c0_flagged < 0 || c.c1_flagged < 0 || c.c2_flagged < 0 || c.c0_flagged > c.c0_total ||
      c.c1_flagged > c.c1_total || c.c2_flagged > c.c2_total) {
    throw Error("InvalidCounts", "flagged counts must lie in [0, total]");
  }
  EvalReport r;
  r.counts = c;
  const double tp = static_cast<double>(c.c0_flagged + c.c1_flagged);
  const double fp = static_cast<double>(c.c2_flagged);
  r.recall = 100.0 * tp / static_cast<double>(positives);
  r.paper_precision = 100.0 * static_cast<double>(c.c2_total - c.c2_flagged) / static_cast<double>(c.c2_total);
  r.std_precision = tp + fp > 0.0 ? 100.0 * tp / (tp + fp) : 0.0;
  const double denom = r.recall + r.paper_precision;
  r.f1 = denom > 0.0 ? 2.0 * r.recall * r.paper_precision / denom : 0.0;
  return r;
}

std::string format_percent(double value) {
  // Nudge by a relative epsilon so values like 72.95 computed as 72.9499...
  // still round up.
  const double scaled = value * 10.0;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::fabs(scaled)));
  return fmt::format("{:.1f}", rounded / 10.0);
}

std::string report_to_table(std::span<const NamedReport> reports, TableFormat format) {
  std::string out;
  if (format == TableFormat::Csv) {
    out = "Name,Recall,Precision,F1\n";
    for (const auto& [name, r] : reports) {
      std::string quoted = name;
      if (name.find_first_of(",\"\n") != std::string::npos) {
        quoted = "\"";
        for (const char ch : name) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        quoted += "\"";
      }
      out += fmt::format("{},{},{},{}\n", quoted, format_percent(r.recall), format_percent(r.paper_precision),
                         format_percent(r.f1));
    }
  } else {
    out = "| Name | Recall | Precision | F1 |\n|---|---:|---:|---:|\n";
    for (const auto& [name, r] : reports) {
      out += fmt::format("| {} | {} | {} | {} |\n", name, format_percent(r.recall), format_percent(r.paper_precision),
                         format_percent(r.f1));
    }
  }
  return out;
}

std::map<std::string, std::string> read_outputs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IoError", "cannot open outputs file " + path);
  std::map<std::string, std::string> outputs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      outputs[j.at("image_id").get<std::string>()] = j.at("text").get<std::string>();
    } catch (const json::exception& ex) {
      throw Error("ParseError", fmt::format("{}:{}: {}", path, lineno, ex.what()));
    }
  }
  return outputs;
}

long count_identified(std::span<const std::string> outputs, AblationPrompt prompt, const text::KeywordSet& keywords) {
  long n = 0;
  for (const auto& raw : outputs) {
    bool hit = false;
    switch (prompt) {
      case AblationPrompt::OpenEnded: hit = text::flag_output(raw, keywords, true); break;
      case AblationPrompt::YesNo: hit = text::answers_yes(raw); break;
      case AblationPrompt::MultipleChoice: hit = text::choice_letter(raw) == 'A'; break;
    }
    n += hit ? 1 : 0;
  }
  return n;
}

}  // namespace sam_align::eval
