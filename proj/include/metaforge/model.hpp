// SPDX-License-Identifier: Apache-2.0
//
// The Seq2SPG dialogue model: a shared LSTM encoder/decoder, a per-task
// private MLP over [embed(x_t), h_{t-1}], and a tanh gate fusing the two
// logit streams:
//
//   g_s = tanh(W_s [o_s, o_p] + b_s)
//   g_p = tanh(W_p [o_s, o_p] + b_p)
//   o   = g_s * o_s + g_p * o_p
//
// o_s, o_p and o are treated as logits; log-softmax is applied inside the
// loss, so the fused output always induces a valid distribution.
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "metaforge/autodiff.hpp"
#include "metaforge/corpus.hpp"
#include "metaforge/mask.hpp"
#include "metaforge/params.hpp"

namespace metaforge::model {

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;   // d_e
  std::size_t hidden_dim = 16;  // d_h
  std::size_t mlp_dim = 16;     // d_m
  bool attention = false;
  // Seq2SP'G ablation: the private MLP sees h_{t-1} only, not embed(x_t).
  bool private_hidden_only = false;

  std::size_t private_input_dim() const {
    return private_hidden_only ? hidden_dim : embed_dim + hidden_dim;
  }
  // (rows, cols) of the four private weight matrices.
  std::vector<std::pair<std::size_t, std::size_t>> private_dims() const;
};

// Number of private weight layers (fixed 4-layer MLP).
inline constexpr std::size_t kPrivateLayers = 4;

// All trainable tensors, uniform(-0.08, 0.08) from the seed. Partition
// prefixes: shared. / private. / gate.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Names of the private weight matrices in layer order.
std::vector<std::string> private_weight_names();

struct DecoderState {
  ad::TensorPtr h;  // [d_h]
  ad::TensorPtr c;  // [d_h]
  ad::TensorPtr encoder_outputs;  // [src_len, d_h]
};

DecoderState encode(ad::Tape& tape, const ParamStore& params,
                    const ModelConfig& cfg, std::span<const int> query);

// One decoder step: logits o_s over the vocabulary plus the updated state.
std::pair<ad::TensorPtr, DecoderState> shared_step(ad::Tape& tape,
                                                   const ParamStore& params,
                                                   const ModelConfig& cfg,
                                                   int token,
                                                   const DecoderState& state);

// Private MLP logits; effective weights are theta_p * mask when a mask is
// given.
ad::TensorPtr private_forward(ad::Tape& tape, const ParamStore& params,
                              const ModelConfig& cfg, int token,
                              const ad::TensorPtr& h_prev,
                              const EdgeMask* mask);

ad::TensorPtr gate_fuse(ad::Tape& tape, const ParamStore& params,
                        const ad::TensorPtr& o_s, const ad::TensorPtr& o_p);

// Teacher-forced negative log-likelihood of response given query, summed
// over response tokens plus the end-of-sequence target.
ad::TensorPtr sequence_nll(ad::Tape& tape, const ParamStore& params,
                           const ModelConfig& cfg,
                           const corpus::DialoguePair& pair,
                           const EdgeMask* mask);

// Mean of sequence_nll over the pairs.
ad::TensorPtr batch_nll(ad::Tape& tape, const ParamStore& params,
                        const ModelConfig& cfg,
                        std::span<const corpus::DialoguePair> pairs,
                        const EdgeMask* mask);

// Argmax decoding, ties broken by lowest token id; stops at end-of-sequence
// (not emitted) or max_len.
std::vector<int> greedy_decode(const ParamStore& params,
                               const ModelConfig& cfg,
                               std::span<const int> query,
                               const EdgeMask* mask, std::size_t max_len);

}  // namespace metaforge::model
