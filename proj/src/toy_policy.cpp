// SPDX-License-Identifier: Apache-2.0

#include "sam_align/toy_policy.hpp"

#include <algorithm>
#include <sstream>

namespace sam_align::grpo {

PolicyParams PolicyParams::zeros(int vocab_size) {
  return {Eigen::MatrixXd::Zero(ToyPolicy::kContextDim + vocab_size, vocab_size), Eigen::VectorXd::Zero(vocab_size)};
}

PolicyParams& PolicyParams::operator+=(const PolicyParams& other) {
  weights += other.weights;
  bias += other.bias;
  return *this;
}

PolicyParams& PolicyParams::operator*=(double scale) {
  weights *= scale;
  bias *= scale;
  return *this;
}

bool PolicyParams::all_finite() const { return weights.allFinite() && bias.allFinite(); }

double PolicyParams::max_abs() const {
  return std::max(weights.cwiseAbs().maxCoeff(), bias.size() ? bias.cwiseAbs().maxCoeff() : 0.0);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

ToyPolicy::ToyPolicy(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  if (vocab_.size() < 2 || vocab_.size() > kMaxVocab) {
    throw Error("InvalidVocab", "vocabulary must hold between 2 and 64 tokens");
  }
  auto sorted = vocab_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error("InvalidVocab", "duplicate vocabulary entry");
  }
  params_ = PolicyParams::zeros(vocab_size());
}

std::vector<std::string> ToyPolicy::default_vocab() {
  return {"<reasoning>", "</reasoning>", "<answer>", "</answer>", "military", "missile",   "silo",
          "circular",    "pads",         "radar",    "revetments", "roads",   "houses",    "fields",
          "trees",       "river",        "buildings", "site",      "area",    "residential", "<eos>"};
}

int ToyPolicy::token_id(std::string_view token) const {
  const auto it = std::find(vocab_.begin(), vocab_.end(), token);
  if (it == vocab_.end()) throw UnknownToken(std::string(token));
  return static_cast<int>(it - vocab_.begin());
}

Eigen::VectorXd ToyPolicy::logits(Context ctx, int prev) const {
  return params_.bias + params_.weights.row(static_cast<int>(ctx)).transpose() +
         params_.weights.row(kContextDim + prev).transpose();
}

Eigen::VectorXd ToyPolicy::log_probs(Context ctx, int prev) const {
  return log_softmax(logits(ctx, prev));
}

std::vector<int> ToyPolicy::tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) ids.push_back(token_id(token));
  return ids;
}

std::string ToyPolicy::detokenize(std::span<const int> tokens) const {
  std::string out;
  for (int id : tokens) {
    if (id == eos()) continue;
    if (!out.empty()) out += ' ';
    out += vocab_.at(static_cast<std::size_t>(id));
  }
  return out;
}

std::vector<int> ToyPolicy::greedy_rollout(Context ctx, int max_len) const {
  std::vector<int> out;
  int prev = start_token();
  for (int t = 0; t < max_len; ++t) {
    Eigen::Index best = 0;
    logits(ctx, prev).maxCoeff(&best);
    out.push_back(static_cast<int>(best));
    if (best == eos()) break;
    prev = static_cast<int>(best);
  }
  return out;
}

nlohmann::json ToyPolicy::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < params_.weights.rows(); ++r) {
    rows.push_back(std::vector<double>(params_.weights.row(r).begin(), params_.weights.row(r).end()));
  }
  return {{"vocab", vocab_},
          {"context_dim", kContextDim},
          {"weights", std::move(rows)},
          {"bias", std::vector<double>(params_.bias.begin(), params_.bias.end())}};
}

ToyPolicy ToyPolicy::from_json(const nlohmann::json& j) {
  try {
    ToyPolicy policy(j.at("vocab").get<std::vector<std::string>>());
    if (j.at("context_dim").get<int>() != kContextDim) throw Error("BadCheckpoint", "context_dim mismatch");
    const auto& rows = j.at("weights");
    const auto bias = j.at("bias").get<std::vector<double>>();
    auto& p = policy.params();
    if (rows.size() != static_cast<std::size_t>(p.weights.rows()) || bias.size() != static_cast<std::size_t>(p.bias.size())) {
      throw Error("BadCheckpoint", "parameter shape does not match vocabulary");
    }
    for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
      const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(p.weights.cols())) throw Error("BadCheckpoint", "ragged weight row");
      for (Eigen::Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = row[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < p.bias.size(); ++c) p.bias(c) = bias[static_cast<std::size_t>(c)];
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw Error("BadCheckpoint", e.what());
  }
}

}  // namespace sam_align::grpo
