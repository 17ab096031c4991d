// SPDX-License-Identifier: Apache-2.0

#include "sam_align/caption_client.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <boost/beast/core/detail/base64.hpp>
#include <fmt/format.h>

#include "sam_align/imagery_client.hpp"
#include "sam_align/text_analysis.hpp"

namespace sam_align {
using nlohmann::json;

void CaptionConfig::validate() const {
  if (base_url.empty()) throw UsageError("caption.base_url is required");
  if (model_id.empty()) throw UsageError("caption.model_id is required");
  if (max_concurrency < 1) throw UsageError("caption.max_concurrency must be >= 1");
  if (retry_budget < 0) throw UsageError("caption.retry_budget must be >= 0");
  if (default_max_tokens < 1 || long_max_tokens < 1) throw UsageError("max_tokens must be positive");
}

int max_tokens_for(const CaptionConfig& cfg, PromptKind kind) {
  return kind == PromptKind::LongDetail || kind == PromptKind::CotConvert ? cfg.long_max_tokens
                                                                          : cfg.default_max_tokens;
}

std::string image_data_url(std::string_view image_bytes) {
  namespace b64 = boost::beast::detail::base64;
  const auto info = probe_image(image_bytes);
  std::string encoded(b64::encoded_size(image_bytes.size()), '\0');
  encoded.resize(b64::encode(encoded.data(), image_bytes.data(), image_bytes.size()));
  return "data:" + info.content_type + ";base64," + encoded;
}

json build_caption_request(const CaptionConfig& cfg, PromptKind kind, std::string_view image_bytes, bool sampling) {
  json content = json::array();
  content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_url(image_bytes)}}}});
  content.push_back({{"type", "text"}, {"text", prompt_template(kind)}});
  return {{"model", cfg.model_id},
          {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})},
          {"max_tokens", max_tokens_for(cfg, kind)},
          {"temperature", sampling ? cfg.sample_temperature : cfg.eval_temperature}};
}

json build_cot_request(const CaptionConfig& cfg, std::string_view long_caption) {
  return {{"model", cfg.model_id},
          {"messages", json::array({{{"role", "system"}, {"content", prompt_template(PromptKind::CotConvert)}},
                                    {{"role", "user"}, {"content", std::string(long_caption)}}})},
          {"max_tokens", max_tokens_for(cfg, PromptKind::CotConvert)},
          {"temperature", cfg.eval_temperature}};
}

CaptionClient::CaptionClient(CaptionConfig cfg, std::filesystem::path workspace, Transport transport)
    : cfg_(std::move(cfg)), workspace_(std::move(workspace)), transport_(std::move(transport)) {
  cfg_.validate();
}

namespace {

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

bool mentions_context_length(const std::string& body) {
  std::string lower = body;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return lower.find("context_length_exceeded") != std::string::npos ||
         lower.find("context length") != std::string::npos || lower.find("maximum context") != std::string::npos;
}

std::string message_text(const json& message) {
  const auto& content = message.at("content");
  if (content.is_null()) return {};
  if (content.is_string()) return content.get<std::string>();
  std::string out;
  for (const auto& part : content) {
    if (part.value("type", "") == "text") out += part.value("text", "");
  }
  return out;
}

}  // namespace

std::string CaptionClient::post(const json& body, std::string& model_id) {
  HttpRequest req;
  req.method = "POST";
  std::string base = cfg_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + "/chat/completions";
  req.body = body.dump();
  req.content_type = "application/json";
  if (!cfg_.api_key.empty()) req.headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);

  const HttpResponse resp = transport_(req);
  if (resp.status != 200) {
    if (resp.status == 400 && mentions_context_length(resp.body)) throw ContextLengthExceeded(resp.body);
    throw HttpError(resp.status, "POST " + req.url + ": " + resp.body.substr(0, 512));
  }
  std::string text;
  try {
    const auto j = json::parse(resp.body);
    model_id = j.value("model", cfg_.model_id);
    const auto& choices = j.at("choices");
    if (!choices.empty()) {
      const auto& choice = choices.at(0);
      if (choice.value("finish_reason", "") == "length" && mentions_context_length(resp.body)) {
        throw ContextLengthExceeded("completion truncated by the context window");
      }
      text = message_text(choice.at("message"));
    }
  } catch (const json::exception& ex) {
    throw HttpError(resp.status, std::string("malformed completion response: ") + ex.what());
  }
  text = rtrim(std::move(text));
  if (text.empty()) throw EmptyCompletion();
  return text;
}

CaptionRecord CaptionClient::generate_caption(const ImageAsset& image, PromptKind kind, bool sampling) {
  if (kind == PromptKind::CotConvert) throw UsageError("CotConvert captions come from convert_to_cot");
  std::ifstream in(workspace_ / image.path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot read image " + (workspace_ / image.path).string());
  std::ostringstream bytes;
  bytes << in.rdbuf();

  const auto body = build_caption_request(cfg_, kind, bytes.str(), sampling);
  std::string model_id;
  std::string text = post(body, model_id);
  return {image.id, kind, std::move(text), model_id, max_tokens_for(cfg_, kind), utc_timestamp_now()};
}

CotResult CaptionClient::convert_to_cot(const CaptionRecord& long_caption) {
  if (long_caption.kind != PromptKind::LongDetail) throw UsageError("convert_to_cot needs a long_detail caption");
  const auto body = build_cot_request(cfg_, long_caption.text);
  for (int attempt = 0; attempt <= cfg_.retry_budget; ++attempt) {
    std::string model_id;
    std::string text = post(body, model_id);
    if (!text::parse_output(text).format_ok) continue;
    return {{long_caption.image_id, PromptKind::CotConvert, std::move(text), model_id,
             max_tokens_for(cfg_, PromptKind::CotConvert), utc_timestamp_now()},
            attempt};
  }
  throw FormatRejected(cfg_.retry_budget + 1);
}

}  // namespace sam_align
