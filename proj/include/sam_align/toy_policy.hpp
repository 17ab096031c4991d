// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sam_align/errors.hpp"
#include "sam_align/random.hpp"

namespace sam_align::grpo {

// Image label the toy policy is conditioned on. Stands in for an image
// embedding; the policy never sees pixels.
enum class Context : int { Positive = 0, Negative = 1 };

class UnknownToken : public Error {
 public:
  explicit UnknownToken(const std::string& token) : Error("UnknownToken", "'" + token + "' is not in the vocabulary") {}
};

// Parameters of the linear bigram policy. Also used as the gradient type.
struct PolicyParams {
  // (context_dim + vocab) x vocab. Row c < context_dim is the context row,
  // row context_dim + p is the previous-token row.
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;

  static PolicyParams zeros(int vocab_size);

  PolicyParams& operator+=(const PolicyParams& other);
  PolicyParams& operator*=(double scale);
  bool all_finite() const;
  double max_abs() const;
};

// Autoregressive categorical policy with logits
//   z = W[context] + W[context_dim + prev] + b
// The end-of-sequence token doubles as the start marker, so the first step
// reads the end-of-sequence row.
class ToyPolicy {
 public:
  static constexpr int kContextDim = 2;
  static constexpr std::size_t kMaxVocab = 64;

  // Uniform policy (all parameters zero). The last vocabulary entry must be
  // the end-of-sequence token.
  explicit ToyPolicy(std::vector<std::string> vocab);

  // Tags, keywords, a handful of scene words and "<eos>".
  static std::vector<std::string> default_vocab();

  int vocab_size() const noexcept { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  int eos() const noexcept { return vocab_size() - 1; }
  int start_token() const noexcept { return eos(); }
  int token_id(std::string_view token) const;

  PolicyParams& params() noexcept { return params_; }
  const PolicyParams& params() const noexcept { return params_; }

  Eigen::VectorXd logits(Context ctx, int prev) const;
  Eigen::VectorXd log_probs(Context ctx, int prev) const;

  // Whitespace-separated tokens; throws UnknownToken.
  std::vector<int> tokenize(std::string_view text) const;
  // Space-joined text with the end-of-sequence token dropped.
  std::string detokenize(std::span<const int> tokens) const;

  std::vector<int> greedy_rollout(Context ctx, int max_len) const;

  nlohmann::json to_json() const;
  static ToyPolicy from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> vocab_;
  PolicyParams params_;
};

// Numerically stable log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

}  // namespace sam_align::grpo
