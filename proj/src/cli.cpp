// SPDX-License-Identifier: Apache-2.0

#include "sam_align/cli.hpp"

#include <charconv>
#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "sam_align/caption_client.hpp"
#include "sam_align/config.hpp"
#include "sam_align/curation.hpp"
#include "sam_align/evaluation.hpp"
#include "sam_align/geo_ingest.hpp"
#include "sam_align/grpo.hpp"
#include "sam_align/imagery_client.hpp"
#include "sam_align/manifest.hpp"
#include "sam_align/review_service.hpp"

namespace sam_align {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_file;
  bool json_errors = false;
  std::vector<std::string> sets;
  std::string manifest;

  // ingest
  std::string kmz, cities;
  std::size_t n_cities = 0;
  double radius = kDefaultPerturbRadius;
  std::uint64_t seed = 0;

  // fetch / caption
  std::optional<int> zoom;
  std::string kind = "concise_detail";
  bool cot = false;
  bool sampling = false;
  bool redo = false;

  // curate
  std::string out;
  std::string variant;
  std::vector<std::string> quotas;

  // train-toy
  std::string mode = "sft-then-grpo";
  std::optional<long> episodes;
  std::optional<double> format_weight;

  // evaluate
  std::string outputs;
  std::string name = "model";
  std::optional<bool> reasoning_model;

  // serve-review
  std::optional<std::string> host;
  std::optional<int> port;
};

void write_text(const fs::path& path, const std::string& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << data;
  if (!out) throw Error("IoError", "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_ingest(const AppConfig& cfg, const Options& o, std::ostream& out, std::ostream& err) {
  if (o.kmz.empty() && o.cities.empty()) throw UsageError("ingest needs --kmz and/or --cities");
  std::vector<SiteRecord> sites;
  if (!o.kmz.empty()) {
    auto result = parse_kmz(read_file_bytes(o.kmz));
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    sites.insert(sites.end(), result.sites.begin(), result.sites.end());
    out << fmt::format("kmz: {} sites, {} skipped\n", result.sites.size(), result.warnings.size());
  }
  if (!o.cities.empty()) {
    const auto cities = parse_world_cities(read_text(o.cities));
    auto sampled = sample_city_points(cities, o.n_cities, o.radius, o.seed);
    out << fmt::format("world cities: {} sampled from {} cities\n", sampled.size(), cities.size());
    sites.insert(sites.end(), sampled.begin(), sampled.end());
  }

  const auto& path = cfg.paths.manifest;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  curation::ManifestLock lock(path);
  std::vector<curation::ManifestEntry> entries;
  if (fs::exists(path)) entries = curation::read_manifest(path);
  std::set<std::string> known;
  for (const auto& e : entries) known.insert(e.id);
  std::size_t added = 0;
  for (auto& site : sites) {
    if (!known.insert(site.id).second) continue;
    curation::ManifestEntry e;
    e.id = site.id;
    e.site = std::move(site);
    entries.push_back(std::move(e));
    ++added;
  }
  curation::write_manifest(path, entries);
  out << fmt::format("{} new entries, {} total in {}\n", added, entries.size(), path.string());
  return kExitOk;
}

int cmd_fetch(const AppConfig& cfg, const Options& o, const Transport& transport, std::ostream& out,
              std::ostream& err) {
  curation::ManifestLock lock(cfg.paths.manifest);
  curation::ManifestStore store(cfg.paths.manifest);
  std::vector<SiteRecord> todo;
  for (const auto& e : store.snapshot()) {
    if (!e.image) todo.push_back(e.site);
  }
  SystemClock clock;
  ImageryClient client(cfg.imagery, cfg.workspace(), transport, clock);
  const auto results = client.fetch_all(todo, o.zoom.value_or(cfg.imagery.zoom));
  std::size_t ok = 0, failed = 0;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (results[i].result) {
      const auto asset = results[i].result->asset;
      store.update(todo[i].id, [&](curation::ManifestEntry& e) { e.image = asset; });
      ++ok;
    } else {
      ++failed;
      try {
        std::rethrow_exception(results[i].error);
      } catch (const std::exception& ex) {
        err << "fetch " << todo[i].id << ": " << ex.what() << "\n";
      }
    }
  }
  out << fmt::format("fetched {} images, {} failed, {} requests\n", ok, failed, client.requests_made());
  return failed ? kExitFailure : kExitOk;
}

int cmd_caption(const AppConfig& cfg, const Options& o, const Transport& transport, std::ostream& out,
                std::ostream& err) {
  const PromptKind kind = o.cot ? PromptKind::CotConvert : parse_prompt_kind(o.kind);
  curation::ManifestLock lock(cfg.paths.manifest);
  curation::ManifestStore store(cfg.paths.manifest);
  CaptionClient client(cfg.caption, cfg.workspace(), transport);

  std::vector<curation::ManifestEntry> todo;
  for (const auto& e : store.snapshot()) {
    if (!e.image) continue;
    if (!o.redo && e.latest_caption(kind)) continue;
    if (kind == PromptKind::CotConvert && !e.latest_caption(PromptKind::LongDetail)) {
      err << "skip " << e.id << ": no long_detail caption to convert\n";
      continue;
    }
    todo.push_back(e);
  }

  std::mutex mutex;
  std::size_t next = 0, ok = 0, failed = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard guard(mutex);
        if (next == todo.size()) return;
        i = next++;
      }
      const auto& e = todo[i];
      try {
        CaptionRecord record;
        if (kind == PromptKind::CotConvert) {
          auto result = client.convert_to_cot(*e.latest_caption(PromptKind::LongDetail));
          record = std::move(result.caption);
        } else {
          record = client.generate_caption(*e.image, kind, o.sampling);
        }
        store.update(e.id, [&](curation::ManifestEntry& m) { m.captions.push_back(record); });
        std::lock_guard guard(mutex);
        ++ok;
      } catch (const std::exception& ex) {
        std::lock_guard guard(mutex);
        ++failed;
        err << "caption " << e.id << ": " << ex.what() << "\n";
      }
    }
  };
  std::vector<std::thread> threads;
  const auto n = std::min<std::size_t>(todo.size(), static_cast<std::size_t>(cfg.caption.max_concurrency));
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  out << fmt::format("{} {} captions written, {} failed\n", ok, to_string(kind), failed);
  return failed ? kExitFailure : kExitOk;
}

std::size_t parse_quota_count(const std::string& value) {
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw UsageError("bad quota count '" + value + "'");
  }
  return n;
}

// "train.c0=101", "test.c1=all"
void apply_quota(curation::SplitQuotas& q, const std::string& spec) {
  const auto eq = spec.find('=');
  const auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw UsageError("quota must look like train.c0=101 or test.c1=all");
  }
  const auto split = spec.substr(0, dot), cat = spec.substr(dot + 1, eq - dot - 1), value = spec.substr(eq + 1);
  curation::SplitQuota* target = split == "train" ? &q.train : split == "test" ? &q.test : nullptr;
  if (!target) throw UsageError("unknown split '" + split + "' in quota");
  const std::optional<std::size_t> n = value == "all" ? std::nullopt : std::optional(parse_quota_count(value));
  if (cat == "c0") target->c0 = n;
  else if (cat == "c1") target->c1 = n;
  else if (cat == "c2") target->c2 = n;
  else throw UsageError("unknown category '" + cat + "' in quota");
}

int cmd_curate_assign(const AppConfig& cfg, std::ostream& out) {
  curation::ManifestLock lock(cfg.paths.manifest);
  curation::ManifestStore store(cfg.paths.manifest);
  auto entries = store.snapshot();
  curation::assign_categories(entries, cfg.eval.keywords);
  curation::write_manifest(cfg.paths.manifest, entries);
  std::map<std::string, int> counts;
  for (const auto& e : entries) counts[e.category ? std::string(to_string(*e.category)) : "none"]++;
  out << fmt::format("C0 {} C1 {} C2 {} unassigned {}\n", counts["C0"], counts["C1"], counts["C2"], counts["none"]);
  return kExitOk;
}

int cmd_curate_split(const AppConfig& cfg, const Options& o, std::ostream& out) {
  curation::SplitQuotas quotas;
  for (const auto& q : o.quotas) apply_quota(quotas, q);
  curation::ManifestLock lock(cfg.paths.manifest);
  curation::ManifestStore store(cfg.paths.manifest);
  const auto entries = store.snapshot();
  const auto splits = curation::build_splits(entries, quotas, o.seed);
  const fs::path dir = o.out.empty() ? cfg.workspace() / "splits" : fs::path(o.out);
  curation::write_manifest(dir / "train.jsonl", splits.train);
  curation::write_manifest(dir / "test.jsonl", splits.test);
  curation::write_manifest(cfg.paths.manifest, curation::apply_splits(entries, splits));
  out << fmt::format("train {} test {} (seed {}) -> {}\n", splits.train.size(), splits.test.size(), o.seed,
                     dir.string());
  return kExitOk;
}

int cmd_curate_export(const AppConfig& cfg, const Options& o, std::ostream& out) {
  const auto variant = curation::parse_sft_variant(o.variant);
  const auto entries = curation::ManifestStore(cfg.paths.manifest).snapshot();
  const auto records = curation::export_sft(entries, variant);
  const fs::path path = o.out.empty() ? cfg.workspace() / fmt::format("sft_{}.jsonl", o.variant) : fs::path(o.out);
  write_text(path, curation::sft_to_jsonl(records));
  auto meta = path;
  meta += ".meta.json";
  write_text(meta, json{{"variant", o.variant},
                        {"records", records.size()},
                        {"learning_rate", cfg.sft.learning_rate},
                        {"batch_size", cfg.sft.batch_size}}
                       .dump(2) +
                       "\n");
  out << fmt::format("{} records -> {}\n", records.size(), path.string());
  return kExitOk;
}

int cmd_train_toy(AppConfig cfg, const Options& o, std::ostream& out) {
  if (o.mode != "zero" && o.mode != "sft-then-grpo") throw UsageError("--mode must be zero or sft-then-grpo");
  if (o.episodes) cfg.grpo.episodes = *o.episodes;
  cfg.grpo.seed = o.seed;
  if (o.format_weight) cfg.reward.format_weight = *o.format_weight;
  cfg.grpo.validate();
  cfg.reward.validate();

  const auto initial = o.mode == "zero" ? grpo::toy::pretrained_policy() : grpo::toy::cot_sft_policy();
  const auto dataset = grpo::toy::balanced_dataset();
  const auto result = grpo::train_toy(dataset, initial, cfg.grpo, cfg.reward);

  const fs::path dir = o.out.empty() ? cfg.paths.outputs / fmt::format("toy_{}_seed{}", o.mode, o.seed) : fs::path(o.out);
  write_text(dir / "checkpoint.json", result.policy.to_json().dump(1) + "\n");
  std::ostringstream log;
  grpo::write_log_csv(log, result.log);
  write_text(dir / "log.csv", log.str());

  if (!result.evals.empty()) {
    const auto& last = result.evals.back();
    out << fmt::format("mode={} seed={} episodes={} pos_emit={:.3f} neg_emit={:.3f} format={:.3f} crossing={}\n",
                       o.mode, o.seed, cfg.grpo.episodes, last.pos_emit_rate, last.neg_emit_rate, last.format_rate,
                       grpo::episodes_to_threshold(result.evals, 0.9));
  }
  out << "wrote " << (dir / "checkpoint.json").string() << " and " << (dir / "log.csv").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const AppConfig& cfg, const Options& o, std::ostream& out) {
  if (o.outputs.empty()) throw UsageError("evaluate needs --outputs");
  const bool reasoning = o.reasoning_model.value_or(cfg.eval.reasoning_model);
  const auto entries = curation::read_manifest(cfg.paths.manifest);
  const auto outputs = eval::read_outputs(o.outputs);
  const auto counts = eval::score_outputs(entries, outputs, cfg.eval.keywords, reasoning);
  const std::vector<eval::NamedReport> reports{{o.name, eval::compute_report(counts)}};
  const fs::path dir = o.out.empty() ? cfg.paths.outputs : fs::path(o.out);
  write_text(dir / "report.csv", eval::report_to_table(reports, eval::TableFormat::Csv));
  write_text(dir / "report.md", eval::report_to_table(reports, eval::TableFormat::Markdown));
  out << eval::report_to_table(reports, eval::TableFormat::Markdown);
  out << fmt::format("counts C0 {}/{} C1 {}/{} C2 {}/{}\n", counts.c0_flagged, counts.c0_total, counts.c1_flagged,
                     counts.c1_total, counts.c2_flagged, counts.c2_total);
  return kExitOk;
}

int cmd_serve_review(const AppConfig& cfg, const Options& o, std::ostream& out) {
  // Block the stop signals before any server thread exists so only sigwait sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  ReviewService service(cfg.paths.manifest, cfg.eval.keywords);
  const auto host = o.host.value_or(cfg.review.host);
  const int port = service.start(host, o.port.value_or(cfg.review.port));
  out << fmt::format("review API on http://{}:{}/api (Ctrl-C to stop)\n", host, port) << std::flush;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  service.stop();
  pthread_sigmask(SIG_UNBLOCK, &stop_signals, nullptr);
  return kExitOk;
}

ConfigValues flag_overrides(const Options& o) {
  ConfigValues flags;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
    flags[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (!o.manifest.empty()) flags["paths.manifest"] = o.manifest;
  return flags;
}

void report_error(std::ostream& err, bool as_json, const std::string& kind, const std::string& message, int code) {
  if (as_json) {
    err << json{{"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}}.dump() << "\n";
  } else {
    err << "error: " << message << "\n";
  }
}

}  // namespace

int run_command(const std::vector<std::string>& args, const CliEnvironment& env) {
  std::ostream& out = env.out ? *env.out : std::cout;
  std::ostream& err = env.err ? *env.err : std::cerr;
  const Transport transport = env.transport ? env.transport : make_http_transport();

  Options o;
  CLI::App app{"Remote-sensing caption alignment pipeline", "sam-align"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config_file, "Config file ([section] key = value)");
  app.add_flag("--json", o.json_errors, "Print errors as a JSON envelope on stderr");
  app.add_option("--set", o.sets, "Override a config value: section.key=value");
  app.add_option("--manifest", o.manifest, "Manifest path (overrides paths.manifest)");

  auto* ingest = app.add_subcommand("ingest", "Parse KMZ sites and sample world-city negatives into the manifest");
  ingest->add_option("--kmz", o.kmz, "KMZ archive of candidate sites");
  ingest->add_option("--cities", o.cities, "World-cities CSV (city, lat, lng)");
  ingest->add_option("--n-cities", o.n_cities, "Number of city points to sample");
  ingest->add_option("--radius", o.radius, "Perturbation radius in degrees")->check(CLI::NonNegativeNumber);
  ingest->add_option("--seed", o.seed, "Sampling seed");

  auto* fetch = app.add_subcommand("fetch", "Download imagery for entries without an image");
  fetch->add_option("--zoom", o.zoom, "Zoom level (default imagery.zoom)");

  auto* caption = app.add_subcommand("caption", "Caption fetched images through the inference API");
  caption->add_option("--kind", o.kind, "concise_detail|long_detail|open_ended|yes_no|multiple_choice");
  caption->add_flag("--cot", o.cot, "Convert long_detail captions into reasoning/answer form");
  caption->add_flag("--sample", o.sampling, "Use the sampling temperature");
  caption->add_flag("--redo", o.redo, "Caption entries that already have this kind");

  auto* curate = app.add_subcommand("curate", "Category assignment, splits and SFT export");
  curate->require_subcommand(1);
  auto* assign = curate->add_subcommand("assign", "Assign C0/C1/C2 from verdicts and captions");
  auto* split = curate->add_subcommand("split", "Build the site-disjoint train/test splits");
  split->add_option("--seed", o.seed, "Selection seed");
  split->add_option("--out", o.out, "Directory for train.jsonl/test.jsonl");
  split->add_option("--quota", o.quotas, "Quota override, e.g. train.c0=101 or test.c1=all");
  auto* exp = curate->add_subcommand("export", "Write SFT training records for the train split");
  exp->add_option("--variant", o.variant, "concise|cot")->required()->check(CLI::IsMember({"concise", "cot"}));
  exp->add_option("--out", o.out, "Output JSONL path");

  auto* train = app.add_subcommand("train-toy", "Run GRPO on the toy policy");
  train->add_option("--mode", o.mode, "zero|sft-then-grpo")->check(CLI::IsMember({"zero", "sft-then-grpo"}));
  train->add_option("--episodes", o.episodes, "Completion budget");
  train->add_option("--seed", o.seed, "Training seed")->default_val(42);
  train->add_option("--format-weight", o.format_weight, "Format reward weight");
  train->add_option("--out", o.out, "Output directory for checkpoint.json and log.csv");

  auto* evaluate = app.add_subcommand("evaluate", "Score model outputs against the test split");
  evaluate->add_option("--outputs", o.outputs, "outputs.jsonl with image_id/text")->required();
  evaluate->add_option("--name", o.name, "Row label in the report");
  evaluate->add_option("--out", o.out, "Directory for report.csv/report.md");
  evaluate->add_flag("--reasoning-model,!--no-reasoning-model", o.reasoning_model,
                     "Judge only the <answer> span of tagged outputs");

  auto* serve = app.add_subcommand("serve-review", "Serve the expert review API");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port (0 picks a free one)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    report_error(err, o.json_errors, "UsageError", ex.what(), kExitUsage);
    if (!o.json_errors) err << app.help();
    return kExitUsage;
  }

  try {
    const auto cfg = load_config(o.config_file.empty() ? std::nullopt : std::optional<fs::path>(o.config_file),
                                 env.envp, flag_overrides(o));
    if (ingest->parsed()) return cmd_ingest(cfg, o, out, err);
    if (fetch->parsed()) return cmd_fetch(cfg, o, transport, out, err);
    if (caption->parsed()) return cmd_caption(cfg, o, transport, out, err);
    if (assign->parsed()) return cmd_curate_assign(cfg, out);
    if (split->parsed()) return cmd_curate_split(cfg, o, out);
    if (exp->parsed()) return cmd_curate_export(cfg, o, out);
    if (train->parsed()) return cmd_train_toy(cfg, o, out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, o, out);
    if (serve->parsed()) return cmd_serve_review(cfg, o, out);
    throw UsageError("no command given");
  } catch (const UsageError& ex) {
    report_error(err, o.json_errors, ex.kind(), ex.what(), kExitUsage);
    return kExitUsage;
  } catch (const Error& ex) {
    report_error(err, o.json_errors, ex.kind(), ex.what(), kExitFailure);
    return kExitFailure;
  } catch (const std::exception& ex) {
    report_error(err, o.json_errors, "InternalError", ex.what(), kExitFailure);
    return kExitFailure;
  }
}

}  // namespace sam_align
