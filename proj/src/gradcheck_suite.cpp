// SPDX-License-Identifier: Apache-2.0

#include "metaforge/gradcheck_suite.hpp"

#include <algorithm>

#include "metaforge/corpus.hpp"
#include "metaforge/mask.hpp"
#include "metaforge/model.hpp"
#include "metaforge/rng.hpp"

namespace metaforge::ad {

namespace {

TensorPtr random_tensor(Rng& rng, Shape shape, double range = 1.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rand_uniform(rng, -range, range);
  return Tensor::leaf(std::move(shape), std::move(v), true);
}

// Reduce an arbitrary tensor to a scalar through a fixed random probe so
// every output coordinate contributes to the checked gradient.
TensorPtr probe_to_scalar(Tape& tape, const TensorPtr& t,
                          const std::vector<double>& probe) {
  TensorPtr flat = t;
  if (t->is_matrix()) {
    // fold rows via matmul with a probe vector, then probe again
    auto col = Tensor::leaf({t->cols()}, std::vector<double>(
                                             probe.begin(),
                                             probe.begin() +
                                                 static_cast<std::ptrdiff_t>(
                                                     t->cols())),
                            false);
    flat = tape.matmul(t, col);
  }
  auto w = Tensor::leaf({flat->size(), 1},
                        std::vector<double>(probe.begin(),
                                            probe.begin() +
                                                static_cast<std::ptrdiff_t>(
                                                    flat->size())),
                        false);
  auto row = tape.matmul(flat, w);  // [1]
  return row;
}

std::vector<double> make_probe(Rng& rng, std::size_t n) {
  std::vector<double> probe(n);
  for (auto& x : probe) x = rand_uniform(rng, -1.0, 1.0);
  return probe;
}

SuiteResult sweep(const std::string& name, std::size_t instances,
                  std::uint64_t seed, double h, double tol,
                  const std::function<GradCheckReport(Rng&)>& one) {
  SuiteResult result;
  result.name = name;
  result.instances = instances;
  Rng rng(seed ^ std::hash<std::string>{}(name));
  result.pass = true;
  for (std::size_t i = 0; i < instances; ++i) {
    auto report = one(rng);
    result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
    result.pass = result.pass && report.pass;
  }
  result.pass = result.pass && result.max_rel_err <= tol;
  return result;
}

}  // namespace

std::vector<SuiteResult> primitive_gradcheck_suite(std::size_t instances,
                                                   std::uint64_t seed,
                                                   double h, double tol) {
  std::vector<SuiteResult> results;

  results.push_back(sweep("matmul", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t m = 1 + rand_index(rng, 4);
    const std::size_t k = 1 + rand_index(rng, 4);
    const std::size_t n = 1 + rand_index(rng, 4);
    auto a = random_tensor(rng, {m, k});
    auto b = random_tensor(rng, {k, n});
    auto probe = make_probe(rng, std::max<std::size_t>(m, n));
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.matmul(ps[0], ps[1]), probe);
        },
        {a, b}, h, tol);
  }));

  results.push_back(
      sweep("matmul_vec", instances, seed, h, tol, [&](Rng& rng) {
        const std::size_t k = 1 + rand_index(rng, 5);
        const std::size_t n = 1 + rand_index(rng, 5);
        auto a = random_tensor(rng, {k});
        auto b = random_tensor(rng, {k, n});
        auto probe = make_probe(rng, n);
        return grad_check(
            [&](Tape& tape, const std::vector<TensorPtr>& ps) {
              return probe_to_scalar(tape, tape.matmul(ps[0], ps[1]), probe);
            },
            {a, b}, h, tol);
      }));

  results.push_back(sweep("add", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t m = 1 + rand_index(rng, 4);
    const std::size_t n = 1 + rand_index(rng, 4);
    auto a = random_tensor(rng, {m, n});
    auto b = random_tensor(rng, {n});
    auto probe = make_probe(rng, std::max(m, n));
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.add(ps[0], ps[1]), probe);
        },
        {a, b}, h, tol);
  }));

  results.push_back(sweep("concat", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t m = 1 + rand_index(rng, 5);
    const std::size_t n = 1 + rand_index(rng, 5);
    auto a = random_tensor(rng, {m});
    auto b = random_tensor(rng, {n});
    auto probe = make_probe(rng, m + n);
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.concat(ps[0], ps[1]), probe);
        },
        {a, b}, h, tol);
  }));

  results.push_back(sweep("slice", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 2 + rand_index(rng, 6);
    const std::size_t off = rand_index(rng, n - 1);
    const std::size_t len = 1 + rand_index(rng, n - off);
    auto x = random_tensor(rng, {n});
    auto probe = make_probe(rng, len);
    return grad_check(
        [&, off, len](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.slice(ps[0], off, len), probe);
        },
        {x}, h, tol);
  }));

  results.push_back(sweep("tanh", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 1 + rand_index(rng, 6);
    auto x = random_tensor(rng, {n}, 2.0);
    auto probe = make_probe(rng, n);
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.tanh(ps[0]), probe);
        },
        {x}, h, tol);
  }));

  results.push_back(sweep("sigmoid", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 1 + rand_index(rng, 6);
    auto x = random_tensor(rng, {n}, 2.0);
    auto probe = make_probe(rng, n);
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.sigmoid(ps[0]), probe);
        },
        {x}, h, tol);
  }));

  results.push_back(
      sweep("elemwise_mul", instances, seed, h, tol, [&](Rng& rng) {
        const std::size_t n = 1 + rand_index(rng, 6);
        auto a = random_tensor(rng, {n});
        auto b = random_tensor(rng, {n});
        auto probe = make_probe(rng, n);
        return grad_check(
            [&](Tape& tape, const std::vector<TensorPtr>& ps) {
              return probe_to_scalar(tape, tape.mul(ps[0], ps[1]), probe);
            },
            {a, b}, h, tol);
      }));

  results.push_back(
      sweep("embedding_lookup", instances, seed, h, tol, [&](Rng& rng) {
        const std::size_t v = 2 + rand_index(rng, 6);
        const std::size_t d = 1 + rand_index(rng, 5);
        const std::size_t id = rand_index(rng, v);
        auto table = random_tensor(rng, {v, d});
        auto probe = make_probe(rng, d);
        return grad_check(
            [&, id](Tape& tape, const std::vector<TensorPtr>& ps) {
              return probe_to_scalar(tape, tape.embedding(ps[0], id), probe);
            },
            {table}, h, tol);
      }));

  results.push_back(
      sweep("log_softmax_nll", instances, seed, h, tol, [&](Rng& rng) {
        const std::size_t n = 2 + rand_index(rng, 7);
        const std::size_t target = rand_index(rng, n);
        auto logits = random_tensor(rng, {n}, 3.0);
        return grad_check(
            [&, target](Tape& tape, const std::vector<TensorPtr>& ps) {
              return tape.log_softmax_nll(ps[0], target);
            },
            {logits}, h, tol);
      }));

  results.push_back(sweep("scale", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 1 + rand_index(rng, 6);
    const double c = rand_uniform(rng, -2.0, 2.0);
    auto x = random_tensor(rng, {n});
    auto probe = make_probe(rng, n);
    return grad_check(
        [&, c](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.scale(ps[0], c), probe);
        },
        {x}, h, tol);
  }));

  results.push_back(sweep("mask_mul", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 1 + rand_index(rng, 6);
    auto x = random_tensor(rng, {n});
    std::vector<double> m(n);
    for (auto& b : m) b = rand_index(rng, 2) ? 1.0 : 0.0;
    auto mask = Tensor::leaf({n}, m, false);
    auto probe = make_probe(rng, n);
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.mask_mul(ps[0], mask), probe);
        },
        {x}, h, tol);
  }));

  results.push_back(sweep("softmax", instances, seed, h, tol, [&](Rng& rng) {
    const std::size_t n = 2 + rand_index(rng, 6);
    auto x = random_tensor(rng, {n}, 2.0);
    auto probe = make_probe(rng, n);
    return grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>& ps) {
          return probe_to_scalar(tape, tape.softmax(ps[0]), probe);
        },
        {x}, h, tol);
  }));

  return results;
}

SuiteResult model_gradcheck_suite(std::size_t instances, std::uint64_t seed,
                                  double h, double tol) {
  SuiteResult result;
  result.name = "sequence_nll";
  result.instances = instances;
  result.pass = true;
  Rng rng(seed ^ 0x5eb2009dULL);

  for (std::size_t i = 0; i < instances; ++i) {
    model::ModelConfig mcfg;
    mcfg.vocab_size = 8;
    mcfg.embed_dim = 4;
    mcfg.hidden_dim = 4;
    mcfg.mlp_dim = 4;
    mcfg.attention = (i % 4) == 1;
    mcfg.private_hidden_only = (i % 4) == 2;

    ParamStore params = model::init_params(mcfg, rng());

    // Random dialogue pair over the non-reserved ids.
    auto rand_seq = [&](std::size_t max_len) {
      std::vector<int> seq(1 + rand_index(rng, max_len));
      for (auto& t : seq) {
        t = 4 + static_cast<int>(rand_index(rng, mcfg.vocab_size - 4));
      }
      return seq;
    };
    corpus::DialoguePair pair{rand_seq(3), rand_seq(2)};

    // Random mask on one instance in four, honoring the mask invariants.
    EdgeMask mask = EdgeMask::all_ones("gc", mcfg.private_dims());
    const bool use_mask = (i % 4) == 3;
    if (use_mask) {
      for (std::size_t l = 1; l + 1 < mask.layers.size(); ++l) {
        for (auto& v : mask.layers[l].keep) {
          v = rand_index(rng, 3) ? 1.0 : 0.0;
        }
      }
      // Enforce dead-node propagation top-down.
      for (std::size_t l = mask.layers.size() - 2; l >= 2; --l) {
        auto& below = mask.layers[l - 1];
        const auto& cur = mask.layers[l];
        for (std::size_t c = 0; c < below.cols; ++c) {
          bool alive = false;
          for (std::size_t k = 0; k < cur.cols && !alive; ++k) {
            alive = cur.at(c, k) != 0.0;
          }
          if (!alive) {
            for (std::size_t r = 0; r < below.rows; ++r) below.set(r, c, 0.0);
          }
        }
      }
      mask.validate();
    }

    std::vector<TensorPtr> tensors;
    for (const auto& [name, t] : params) tensors.push_back(t);
    auto report = grad_check(
        [&](Tape& tape, const std::vector<TensorPtr>&) {
          return model::sequence_nll(tape, params, mcfg, pair,
                                     use_mask ? &mask : nullptr);
        },
        tensors, h, tol);
    result.max_rel_err = std::max(result.max_rel_err, report.max_rel_err);
    result.pass = result.pass && report.pass;
  }
  result.pass = result.pass && result.max_rel_err <= tol;
  return result;
}

}  // namespace metaforge::ad
