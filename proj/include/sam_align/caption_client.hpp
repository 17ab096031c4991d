// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sam_align/errors.hpp"
#include "sam_align/http.hpp"
#include "sam_align/records.hpp"

namespace sam_align {

class EmptyCompletion : public Error {
 public:
  EmptyCompletion() : Error("EmptyCompletion", "model returned an empty completion") {}
};

class ContextLengthExceeded : public Error {
 public:
  explicit ContextLengthExceeded(const std::string& message) : Error("ContextLengthExceeded", message) {}
};

class FormatRejected : public Error {
 public:
  explicit FormatRejected(int attempts)
      : Error("FormatRejected", "no well-formed reasoning/answer output after " + std::to_string(attempts) + " attempts"),
        attempts(attempts) {}

  int attempts;
};

struct CaptionConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_id;
  // Sent as a bearer token when non-empty; normally taken from CAPTION_API_KEY.
  std::string api_key;
  int max_concurrency = 4;
  // Extra conversion attempts after the first one.
  int retry_budget = 3;
  int default_max_tokens = 1024;
  int long_max_tokens = 32768;
  double eval_temperature = 0.0;
  double sample_temperature = 0.7;

  void validate() const;
};

// max_tokens sent for a prompt kind.
int max_tokens_for(const CaptionConfig& cfg, PromptKind kind);

// "data:image/png;base64,..." with the MIME type sniffed from the bytes.
std::string image_data_url(std::string_view image_bytes);

// Chat-completions body: one user message with an image part and a text part.
nlohmann::json build_caption_request(const CaptionConfig& cfg, PromptKind kind, std::string_view image_bytes,
                                     bool sampling);

// Text-only body asking the converter to restructure a long caption.
nlohmann::json build_cot_request(const CaptionConfig& cfg, std::string_view long_caption);

struct CotResult {
  CaptionRecord caption;
  int retry_count = 0;
};

class CaptionClient {
 public:
  // Image paths are resolved against `workspace`.
  CaptionClient(CaptionConfig cfg, std::filesystem::path workspace, Transport transport);

  // Throws UsageError for CotConvert, HttpError, EmptyCompletion,
  // ContextLengthExceeded. Trailing whitespace is trimmed, nothing else.
  CaptionRecord generate_caption(const ImageAsset& image, PromptKind kind, bool sampling = false);

  // Retries until parse_output accepts the format or the retry budget runs
  // out (then FormatRejected).
  CotResult convert_to_cot(const CaptionRecord& long_caption);

  const CaptionConfig& config() const noexcept { return cfg_; }

 private:
  std::string post(const nlohmann::json& body, std::string& model_id);

  CaptionConfig cfg_;
  std::filesystem::path workspace_;
  Transport transport_;
};

}  // namespace sam_align
