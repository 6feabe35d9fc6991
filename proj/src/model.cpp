// SPDX-License-Identifier: Apache-2.0

#include "metaforge/model.hpp"

#include <algorithm>

#include "metaforge/rng.hpp"

namespace metaforge::model {

namespace {

using ad::Tape;
using ad::TensorPtr;

constexpr double kInitRange = 0.08;

TensorPtr init_tensor(ad::Shape shape, Rng& rng) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rand_uniform(rng, -kInitRange, kInitRange);
  return ad::Tensor::leaf(std::move(shape), std::move(v), true);
}

// One LSTM cell step. Gate order within the packed 4H vector: input,
// forget, cell candidate, output.
std::pair<TensorPtr, TensorPtr> lstm_step(Tape& tape, const TensorPtr& x,
                                          const TensorPtr& h_prev,
                                          const TensorPtr& c_prev,
                                          const TensorPtr& w_ih,
                                          const TensorPtr& w_hh,
                                          const TensorPtr& bias,
                                          std::size_t hidden) {
  auto gates = tape.add(
      tape.add(tape.matmul(x, w_ih), tape.matmul(h_prev, w_hh)), bias);
  auto i = tape.sigmoid(tape.slice(gates, 0, hidden));
  auto f = tape.sigmoid(tape.slice(gates, hidden, hidden));
  auto g = tape.tanh(tape.slice(gates, 2 * hidden, hidden));
  auto o = tape.sigmoid(tape.slice(gates, 3 * hidden, hidden));
  auto c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
  auto h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

void check_token(int token, const ModelConfig& cfg) {
  if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) {
    throw IndexError("token id " + std::to_string(token) +
                     " outside vocab of size " +
                     std::to_string(cfg.vocab_size));
  }
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> ModelConfig::private_dims()
    const {
  return {{private_input_dim(), mlp_dim},
          {mlp_dim, mlp_dim},
          {mlp_dim, mlp_dim},
          {mlp_dim, vocab_size}};
}

std::vector<std::string> private_weight_names() {
  return {"private.w1", "private.w2", "private.w3", "private.w4"};
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t V = cfg.vocab_size, E = cfg.embed_dim, H = cfg.hidden_dim;
  ParamStore p;
  p.insert("shared.embedding", init_tensor({V, E}, rng));
  p.insert("shared.encoder.w_ih", init_tensor({E, 4 * H}, rng));
  p.insert("shared.encoder.w_hh", init_tensor({H, 4 * H}, rng));
  p.insert("shared.encoder.bias", init_tensor({4 * H}, rng));
  p.insert("shared.decoder.w_ih", init_tensor({E, 4 * H}, rng));
  p.insert("shared.decoder.w_hh", init_tensor({H, 4 * H}, rng));
  p.insert("shared.decoder.bias", init_tensor({4 * H}, rng));
  p.insert("shared.out_proj", init_tensor({H, V}, rng));
  p.insert("shared.out_bias", init_tensor({V}, rng));
  const auto dims = cfg.private_dims();
  const auto names = private_weight_names();
  for (std::size_t l = 0; l < kPrivateLayers; ++l) {
    p.insert(names[l], init_tensor({dims[l].first, dims[l].second}, rng));
    p.insert("private.b" + std::to_string(l + 1),
             init_tensor({dims[l].second}, rng));
  }
  p.insert("gate.w_s", init_tensor({2 * V, V}, rng));
  p.insert("gate.b_s", init_tensor({V}, rng));
  p.insert("gate.w_p", init_tensor({2 * V, V}, rng));
  p.insert("gate.b_p", init_tensor({V}, rng));
  return p;
}

DecoderState encode(ad::Tape& tape, const ParamStore& params,
                    const ModelConfig& cfg, std::span<const int> query) {
  if (query.empty()) throw ContractError("encode: empty query");
  const auto& table = params.at("shared.embedding");
  const auto& w_ih = params.at("shared.encoder.w_ih");
  const auto& w_hh = params.at("shared.encoder.w_hh");
  const auto& bias = params.at("shared.encoder.bias");

  TensorPtr h = ad::Tensor::zeros({cfg.hidden_dim});
  TensorPtr c = ad::Tensor::zeros({cfg.hidden_dim});
  std::vector<TensorPtr> outputs;
  outputs.reserve(query.size());
  for (int token : query) {
    check_token(token, cfg);
    auto x = tape.embedding(table, static_cast<std::size_t>(token));
    std::tie(h, c) = lstm_step(tape, x, h, c, w_ih, w_hh, bias,
                               cfg.hidden_dim);
    outputs.push_back(h);
  }
  return DecoderState{h, c, tape.concat_rows(outputs)};
}

std::pair<ad::TensorPtr, DecoderState> shared_step(ad::Tape& tape,
                                                   const ParamStore& params,
                                                   const ModelConfig& cfg,
                                                   int token,
                                                   const DecoderState& state) {
  check_token(token, cfg);
  auto x = tape.embedding(params.at("shared.embedding"),
                          static_cast<std::size_t>(token));
  auto [h, c] = lstm_step(tape, x, state.h, state.c,
                          params.at("shared.decoder.w_ih"),
                          params.at("shared.decoder.w_hh"),
                          params.at("shared.decoder.bias"), cfg.hidden_dim);
  TensorPtr proj_in = h;
  if (cfg.attention) {
    // Dot-product attention over the encoder outputs; the context vector is
    // added to h before the output projection.
    auto scores = tape.matmul(state.encoder_outputs, h);
    auto weights = tape.softmax(scores);
    auto context = tape.matmul(weights, state.encoder_outputs);
    proj_in = tape.add(h, context);
  }
  auto o_s = tape.add(tape.matmul(proj_in, params.at("shared.out_proj")),
                      params.at("shared.out_bias"));
  return {o_s, DecoderState{h, c, state.encoder_outputs}};
}

ad::TensorPtr private_forward(ad::Tape& tape, const ParamStore& params,
                              const ModelConfig& cfg, int token,
                              const ad::TensorPtr& h_prev,
                              const EdgeMask* mask) {
  check_token(token, cfg);
  if (h_prev->shape != ad::Shape{cfg.hidden_dim}) {
    throw ContractError("private_forward: h_prev must have length d_h");
  }
  TensorPtr in = h_prev;
  if (!cfg.private_hidden_only) {
    auto x = tape.embedding(params.at("shared.embedding"),
                            static_cast<std::size_t>(token));
    in = tape.concat(x, h_prev);
  }
  const auto names = private_weight_names();
  const auto dims = cfg.private_dims();
  TensorPtr cur = in;
  for (std::size_t l = 0; l < kPrivateLayers; ++l) {
    TensorPtr w = params.at(names[l]);
    if (mask) {
      if (mask->layers.size() != kPrivateLayers ||
          mask->layers[l].rows != dims[l].first ||
          mask->layers[l].cols != dims[l].second) {
        throw ContractError("private_forward: mask shape mismatch at layer " +
                            std::to_string(l + 1));
      }
      w = tape.mask_mul(w, mask->layer_tensor(l));
    }
    cur = tape.add(tape.matmul(cur, w),
                   params.at("private.b" + std::to_string(l + 1)));
    if (l + 1 < kPrivateLayers) cur = tape.tanh(cur);
  }
  return cur;
}

ad::TensorPtr gate_fuse(ad::Tape& tape, const ParamStore& params,
                        const ad::TensorPtr& o_s, const ad::TensorPtr& o_p) {
  auto cat = tape.concat(o_s, o_p);
  auto g_s = tape.tanh(
      tape.add(tape.matmul(cat, params.at("gate.w_s")), params.at("gate.b_s")));
  auto g_p = tape.tanh(
      tape.add(tape.matmul(cat, params.at("gate.w_p")), params.at("gate.b_p")));
  return tape.add(tape.mul(g_s, o_s), tape.mul(g_p, o_p));
}

ad::TensorPtr sequence_nll(ad::Tape& tape, const ParamStore& params,
                           const ModelConfig& cfg,
                           const corpus::DialoguePair& pair,
                           const EdgeMask* mask) {
  if (pair.query.empty() || pair.response.empty()) {
    throw ContractError("sequence_nll: empty query or response");
  }
  DecoderState state = encode(tape, params, cfg, pair.query);
  std::vector<int> inputs;
  inputs.push_back(corpus::Vocab::kSos);
  inputs.insert(inputs.end(), pair.response.begin(), pair.response.end());
  std::vector<int> targets(pair.response.begin(), pair.response.end());
  targets.push_back(corpus::Vocab::kEos);

  TensorPtr total;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto h_prev = state.h;
    auto [o_s, next] = shared_step(tape, params, cfg, inputs[t], state);
    auto o_p = private_forward(tape, params, cfg, inputs[t], h_prev, mask);
    auto o = gate_fuse(tape, params, o_s, o_p);
    auto nll =
        tape.log_softmax_nll(o, static_cast<std::size_t>(targets[t]));
    total = total ? tape.add(total, nll) : nll;
    state = next;
  }
  return total;
}

ad::TensorPtr batch_nll(ad::Tape& tape, const ParamStore& params,
                        const ModelConfig& cfg,
                        std::span<const corpus::DialoguePair> pairs,
                        const EdgeMask* mask) {
  if (pairs.empty()) throw ContractError("batch_nll: no pairs");
  TensorPtr total;
  for (const auto& pair : pairs) {
    auto nll = sequence_nll(tape, params, cfg, pair, mask);
    total = total ? tape.add(total, nll) : nll;
  }
  return tape.scale(total, 1.0 / static_cast<double>(pairs.size()));
}

std::vector<int> greedy_decode(const ParamStore& params,
                               const ModelConfig& cfg,
                               std::span<const int> query,
                               const EdgeMask* mask, std::size_t max_len) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
  ad::Tape tape;
  DecoderState state = encode(tape, params, cfg, query);
  std::vector<int> out;
  int token = corpus::Vocab::kSos;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto h_prev = state.h;
    auto [o_s, next] = shared_step(tape, params, cfg, token, state);
    auto o_p = private_forward(tape, params, cfg, token, h_prev, mask);
    auto o = gate_fuse(tape, params, o_s, o_p);
    std::size_t best = 0;
    for (std::size_t k = 1; k < o->size(); ++k) {
      if (o->values[k] > o->values[best]) best = k;
    }
    if (best == static_cast<std::size_t>(corpus::Vocab::kEos)) break;
    out.push_back(static_cast<int>(best));
    token = static_cast<int>(best);
    state = next;
  }
  return out;
}

}  // namespace metaforge::model
