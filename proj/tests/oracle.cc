#include "oracle.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "logsentinel/optim.h"
#include "logsentinel/tensor.h"

namespace oracle {

namespace ls = logsentinel;

Vec matmul(const Vec& a, const Vec& b, int64_t m, int64_t k, int64_t n) {
  Vec c(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      for (int64_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
    }
  }
  return c;
}

Vec add_bias(const Vec& x, const Vec& bias) {
  Vec y = x;
  for (size_t i = 0; i < y.size(); ++i) y[i] += bias[i % bias.size()];
  return y;
}

Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps) {
  const size_t n = gain.size();
  Vec y(x.size());
  for (size_t r = 0; r < x.size() / n; ++r) {
    double mu = 0.0, var = 0.0;
    for (size_t j = 0; j < n; ++j) mu += x[r * n + j];
    mu /= static_cast<double>(n);
    for (size_t j = 0; j < n; ++j) var += (x[r * n + j] - mu) * (x[r * n + j] - mu);
    var /= static_cast<double>(n);
    for (size_t j = 0; j < n; ++j) y[r * n + j] = (x[r * n + j] - mu) / std::sqrt(var + eps) * gain[j] + bias[j];
  }
  return y;
}

Vec gelu(const Vec& x) {
  const double c = std::sqrt(2.0 / M_PI);
  Vec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
  }
  return y;
}

Vec causal_attention(const Vec& q, const Vec& k, const Vec& v, int64_t batch, int64_t T, int64_t heads, int64_t d) {
  const int64_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Vec out(static_cast<size_t>(batch * T * d), 0.0);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < heads; ++h) {
      for (int64_t t = 0; t < T; ++t) {
        Vec s(static_cast<size_t>(t + 1));
        for (int64_t j = 0; j <= t; ++j) {
          double dot = 0.0;
          for (int64_t c = 0; c < hd; ++c) dot += q[(b * T + t) * d + h * hd + c] * k[(b * T + j) * d + h * hd + c];
          s[j] = dot * scale;
        }
        const double mx = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (int64_t j = 0; j <= t; ++j) {
          for (int64_t c = 0; c < hd; ++c) out[(b * T + t) * d + h * hd + c] += s[j] / z * v[(b * T + j) * d + h * hd + c];
        }
      }
    }
  }
  return out;
}

Vec softmax_rows(const Vec& x, int64_t n) {
  Vec y(x.size());
  for (size_t r = 0; r < x.size() / static_cast<size_t>(n); ++r) {
    double mx = -std::numeric_limits<double>::infinity(), z = 0.0;
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, x[r * n + j]);
    for (int64_t j = 0; j < n; ++j) z += std::exp(x[r * n + j] - mx);
    for (int64_t j = 0; j < n; ++j) y[r * n + j] = std::exp(x[r * n + j] - mx) / z;
  }
  return y;
}

namespace {

double log_sum_exp(const double* row, int64_t V, const std::vector<bool>& keep) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t j = 0; j < V; ++j) {
    if (keep[j]) mx = std::max(mx, row[j]);
  }
  double z = 0.0;
  for (int64_t j = 0; j < V; ++j) {
    if (keep[j]) z += std::exp(row[j] - mx);
  }
  return mx + std::log(z);
}

}  // namespace

double cross_entropy(const Vec& logits, int64_t V, const std::vector<int32_t>& targets, int32_t ignore_id) {
  const std::vector<bool> keep(static_cast<size_t>(V), true);
  double total = 0.0;
  int64_t count = 0;
  for (size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == ignore_id) continue;
    const double* row = logits.data() + r * V;
    total += log_sum_exp(row, V, keep) - row[targets[r]];
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

Vec gather_log_softmax(const Vec& logits, int64_t V, const std::vector<int64_t>& rows, const std::vector<int32_t>& ids,
                       const std::vector<int32_t>& excluded) {
  std::vector<bool> keep(static_cast<size_t>(V), true);
  for (int32_t e : excluded) keep[e] = false;
  Vec out(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const double* row = logits.data() + rows[i] * V;
    out[i] = row[ids[i]] - log_sum_exp(row, V, keep);
  }
  return out;
}

double ppo_surrogate(const Vec& logp_new, const Vec& logp_old, const Vec& rewards, std::optional<double> clip_eps) {
  double total = 0.0;
  for (size_t i = 0; i < logp_new.size(); ++i) {
    const double ratio = std::exp(logp_new[i] - logp_old[i]);
    double value = ratio * rewards[i];
    if (clip_eps) value = std::min(value, std::clamp(ratio, 1.0 - *clip_eps, 1.0 + *clip_eps) * rewards[i]);
    total += value;
  }
  return total / static_cast<double>(logp_new.size());
}

ParamMap widen(const ls::GptModel& model) {
  ParamMap out;
  for (size_t i = 0; i < model.parameters().size(); ++i) {
    auto d = model.parameters()[i].data();
    out[model.parameter_names()[i]] = Vec(d.begin(), d.end());
  }
  return out;
}

Vec gpt_forward(const ls::ModelConfig& cfg, const ParamMap& p, const std::vector<int32_t>& ids, int64_t batch,
                int64_t T) {
  const int64_t d = cfg.d_model, V = cfg.vocab_size, rows = batch * T;
  const Vec& tok = p.at("tok_emb");
  const Vec& pos = p.at("pos_emb");
  Vec x(static_cast<size_t>(rows * d));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < d; ++c) x[r * d + c] = tok[ids[r] * d + c] + pos[(r % T) * d + c];
  }
  for (int32_t l = 0; l < cfg.n_layers; ++l) {
    const std::string h = "h." + std::to_string(l) + ".";
    auto P = [&](const std::string& name) -> const Vec& { return p.at(h + name); };
    const Vec a = layer_norm(x, P("ln1.g"), P("ln1.b"));
    const Vec q = add_bias(matmul(a, P("attn.wq"), rows, d, d), P("attn.bq"));
    const Vec k = add_bias(matmul(a, P("attn.wk"), rows, d, d), P("attn.bk"));
    const Vec v = add_bias(matmul(a, P("attn.wv"), rows, d, d), P("attn.bv"));
    const Vec att = causal_attention(q, k, v, batch, T, cfg.n_heads, d);
    const Vec o = add_bias(matmul(att, P("attn.wo"), rows, d, d), P("attn.bo"));
    for (size_t i = 0; i < x.size(); ++i) x[i] += o[i];
    const Vec m = layer_norm(x, P("ln2.g"), P("ln2.b"));
    const Vec f = gelu(add_bias(matmul(m, P("mlp.fc_w"), rows, d, 4 * d), P("mlp.fc_b")));
    const Vec pr = add_bias(matmul(f, P("mlp.proj_w"), rows, 4 * d, d), P("mlp.proj_b"));
    for (size_t i = 0; i < x.size(); ++i) x[i] += pr[i];
  }
  x = layer_norm(x, p.at("ln_f.g"), p.at("ln_f.b"));
  return matmul(x, p.at("head"), rows, d, V);
}

double relative_error(const Vec& a, const Vec& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// ------------------------------------------------------------ kernel checks

namespace {

using Forward = std::function<ls::Tensor(ls::Tape&, std::vector<ls::Tensor>&)>;
using Reference = std::function<Vec(const std::vector<Vec>&)>;

struct Case {
  std::vector<ls::Shape> shapes;
  std::vector<std::vector<float>> inputs;
  Forward forward;
  Reference reference;
};

std::vector<float> randn(int64_t n, ls::Rng& rng, double scale = 1.0) {
  std::vector<float> v(static_cast<size_t>(n));
  for (float& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

int64_t between(ls::Rng& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(hi - lo + 1)));
}

// The scalar objective sum(output * w) for random fixed w, checked against
// central differences of the reference objective.
double run_case(const Case& c, ls::Rng& rng) {
  ls::Tape tape;
  std::vector<ls::Tensor> ts;
  for (size_t i = 0; i < c.inputs.size(); ++i) ts.push_back(ls::Tensor::from_data(c.shapes[i], c.inputs[i], true));
  const ls::Tensor y = c.forward(tape, ts);
  const int64_t n = y.numel();
  const std::vector<float> w = randn(n, rng);
  const ls::Tensor wt = ls::Tensor::from_data({n}, w);
  tape.backward(tape.sum(tape.mul(tape.reshape(y, {n}), wt)));

  Vec analytic;
  for (const auto& t : ts) {
    auto g = t.grad();
    analytic.insert(analytic.end(), g.begin(), g.end());
  }
  std::vector<Vec> xs;
  for (const auto& in : c.inputs) xs.emplace_back(in.begin(), in.end());
  auto objective = [&]() {
    const Vec out = c.reference(xs);
    if (static_cast<int64_t>(out.size()) != n) throw std::logic_error("reference output size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += out[i] * static_cast<double>(w[i]);
    return s;
  };
  Vec numeric;
  for (auto& x : xs) {
    for (double& v : x) {
      const double keep = v;
      v = keep + kFdEpsilon;
      const double up = objective();
      v = keep - kFdEpsilon;
      const double down = objective();
      v = keep;
      numeric.push_back((up - down) / (2.0 * kFdEpsilon));
    }
  }
  return relative_error(analytic, numeric);
}

using Generator = std::function<Case(ls::Rng&)>;

std::vector<std::pair<std::string, Generator>> generators() {
  std::vector<std::pair<std::string, Generator>> g;
  g.emplace_back("matmul", [](ls::Rng& rng) {
    const int64_t m = between(rng, 1, 5), k = between(rng, 1, 5), n = between(rng, 1, 5);
    return Case{{{m, k}, {k, n}},
                {randn(m * k, rng), randn(k * n, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.matmul(x[0], x[1]); },
                [m, k, n](const std::vector<Vec>& x) { return matmul(x[0], x[1], m, k, n); }};
  });
  g.emplace_back("add", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 4), c = between(rng, 1, 4);
    return Case{{{r, c}, {r, c}},
                {randn(r * c, rng), randn(r * c, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.add(x[0], x[1]); },
                [](const std::vector<Vec>& x) {
                  Vec y = x[0];
                  for (size_t i = 0; i < y.size(); ++i) y[i] += x[1][i];
                  return y;
                }};
  });
  g.emplace_back("add_bias", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 4), c = between(rng, 1, 5);
    return Case{{{r, c}, {c}},
                {randn(r * c, rng), randn(c, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.add_bias(x[0], x[1]); },
                [](const std::vector<Vec>& x) { return add_bias(x[0], x[1]); }};
  });
  g.emplace_back("mul", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 8);
    return Case{{{n}, {n}},
                {randn(n, rng), randn(n, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.mul(x[0], x[1]); },
                [](const std::vector<Vec>& x) {
                  Vec y = x[0];
                  for (size_t i = 0; i < y.size(); ++i) y[i] *= x[1][i];
                  return y;
                }};
  });
  g.emplace_back("scale", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 8);
    const float f = static_cast<float>(rng.normal() * 2.0);
    return Case{{{n}},
                {randn(n, rng)},
                [f](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.scale(x[0], f); },
                [f](const std::vector<Vec>& x) {
                  Vec y = x[0];
                  for (double& v : y) v *= static_cast<double>(f);
                  return y;
                }};
  });
  g.emplace_back("sum", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 10);
    return Case{{{n}},
                {randn(n, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.sum(x[0]); },
                [](const std::vector<Vec>& x) {
                  double s = 0.0;
                  for (double v : x[0]) s += v;
                  return Vec{s};
                }};
  });
  g.emplace_back("mean", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 10);
    return Case{{{n}},
                {randn(n, rng)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.mean(x[0]); },
                [](const std::vector<Vec>& x) {
                  double s = 0.0;
                  for (double v : x[0]) s += v;
                  return Vec{s / static_cast<double>(x[0].size())};
                }};
  });
  g.emplace_back("reshape", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 4), c = between(rng, 1, 4);
    return Case{{{r, c}},
                {randn(r * c, rng)},
                [c, r](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.reshape(x[0], {c, r}); },
                [](const std::vector<Vec>& x) { return x[0]; }};
  });
  g.emplace_back("embedding", [](ls::Rng& rng) {
    const int64_t V = between(rng, 1, 6), d = between(rng, 1, 4), n = between(rng, 1, 8);
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < n; ++i) ids.push_back(static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(V))));
    return Case{{{V, d}},
                {randn(V * d, rng)},
                [ids](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.embedding(x[0], ids); },
                [ids, d](const std::vector<Vec>& x) {
                  Vec y;
                  for (int32_t id : ids) y.insert(y.end(), x[0].begin() + id * d, x[0].begin() + (id + 1) * d);
                  return y;
                }};
  });
  g.emplace_back("layer_norm", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 4), n = between(rng, 2, 8);
    std::vector<float> gain = randn(n, rng, 0.5);
    for (float& v : gain) v += 1.0f;
    // Central differences need the function smooth at the step size; a row
    // whose spread is comparable to it sits on the normalizer's sharp bend.
    std::vector<float> x;
    for (int64_t row = 0; row < r; ++row) {
      std::vector<float> v;
      double sd = 0.0;
      do {
        v = randn(n, rng);
        double mu = 0.0, var = 0.0;
        for (float e : v) mu += e / static_cast<double>(n);
        for (float e : v) var += (e - mu) * (e - mu) / static_cast<double>(n);
        sd = std::sqrt(var);
      } while (sd < 0.2);
      x.insert(x.end(), v.begin(), v.end());
    }
    return Case{{{r, n}, {n}, {n}},
                {x, gain, randn(n, rng, 0.5)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.layer_norm(x[0], x[1], x[2]); },
                [](const std::vector<Vec>& x) { return layer_norm(x[0], x[1], x[2]); }};
  });
  g.emplace_back("gelu", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 10);
    return Case{{{n}},
                {randn(n, rng, 2.0)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.gelu(x[0]); },
                [](const std::vector<Vec>& x) { return gelu(x[0]); }};
  });
  g.emplace_back("dropout", [](ls::Rng& rng) {
    const int64_t n = between(rng, 1, 12);
    const float p = 0.3f;
    const uint64_t seed = rng.next_u64();
    // The kernel's mask for this seed, read off by dropping a tensor of ones.
    ls::Tape probe(false);
    ls::Rng mask_rng(seed);
    const ls::Tensor ones = ls::Tensor::from_data({n}, std::vector<float>(static_cast<size_t>(n), 1.0f));
    const ls::Tensor m = probe.dropout(ones, p, mask_rng);
    const Vec mask(m.data().begin(), m.data().end());
    return Case{{{n}},
                {randn(n, rng)},
                [seed, p](ls::Tape& t, std::vector<ls::Tensor>& x) {
                  ls::Rng r(seed);
                  return t.dropout(x[0], p, r);
                },
                [mask](const std::vector<Vec>& x) {
                  Vec y = x[0];
                  for (size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
                  return y;
                }};
  });
  g.emplace_back("causal_attention", [](ls::Rng& rng) {
    const int64_t b = between(rng, 1, 2), T = between(rng, 1, 4), h = between(rng, 1, 3), hd = between(rng, 1, 3);
    const int64_t d = h * hd, rows = b * T;
    return Case{{{rows, d}, {rows, d}, {rows, d}},
                {randn(rows * d, rng), randn(rows * d, rng), randn(rows * d, rng)},
                [b, T, h](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.causal_attention(x[0], x[1], x[2], b, T, h); },
                [b, T, h, d](const std::vector<Vec>& x) { return causal_attention(x[0], x[1], x[2], b, T, h, d); }};
  });
  g.emplace_back("softmax_rows", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 4), n = between(rng, 1, 6);
    return Case{{{r, n}},
                {randn(r * n, rng, 2.0)},
                [](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.softmax_rows(x[0]); },
                [n](const std::vector<Vec>& x) { return softmax_rows(x[0], n); }};
  });
  g.emplace_back("cross_entropy", [](ls::Rng& rng) {
    const int64_t r = between(rng, 1, 5), V = between(rng, 2, 6);
    std::vector<int32_t> targets;
    for (int64_t i = 0; i < r; ++i) targets.push_back(static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(V))));
    return Case{{{r, V}},
                {randn(r * V, rng, 2.0)},
                [targets](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.cross_entropy(x[0], targets, 0); },
                [targets, V](const std::vector<Vec>& x) { return Vec{cross_entropy(x[0], V, targets, 0)}; }};
  });
  g.emplace_back("gather_log_softmax", [](ls::Rng& rng) {
    const int64_t N = between(rng, 1, 4), V = between(rng, 2, 6), M = between(rng, 1, 6);
    const std::vector<int32_t> excluded{0};
    std::vector<int64_t> rows;
    std::vector<int32_t> ids;
    for (int64_t i = 0; i < M; ++i) {
      rows.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(N))));
      ids.push_back(1 + static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(V - 1))));
    }
    return Case{{{N, V}},
                {randn(N * V, rng, 2.0)},
                [=](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.gather_log_softmax(x[0], rows, ids, excluded); },
                [=](const std::vector<Vec>& x) { return gather_log_softmax(x[0], V, rows, ids, excluded); }};
  });
  for (const bool clipped : {false, true}) {
    g.emplace_back(clipped ? "ppo_surrogate_clipped" : "ppo_surrogate", [clipped](ls::Rng& rng) {
      const int64_t M = between(rng, 1, 6);
      const float eps = 0.2f;
      std::vector<float> lp_new(static_cast<size_t>(M)), lp_old(static_cast<size_t>(M)), rewards(static_cast<size_t>(M));
      for (int64_t i = 0; i < M; ++i) {
        lp_new[i] = static_cast<float>(-0.1 - 3.0 * rng.uniform());
        rewards[i] = rng.uniform() < 0.5 ? -1.0f : 1.0f;
        // Keep the ratio away from the clip boundaries, where the objective has a kink.
        double log_ratio;
        do {
          log_ratio = 0.6 * (rng.uniform() - 0.5);
        } while (std::fabs(std::exp(log_ratio) - (1.0 - eps)) < 0.02 || std::fabs(std::exp(log_ratio) - (1.0 + eps)) < 0.02);
        lp_old[i] = static_cast<float>(lp_new[i] - log_ratio);
      }
      const std::optional<float> clip = clipped ? std::optional<float>(eps) : std::nullopt;
      return Case{{{M}},
                  {lp_new},
                  [=](ls::Tape& t, std::vector<ls::Tensor>& x) { return t.ppo_surrogate(x[0], lp_old, rewards, clip); },
                  [=](const std::vector<Vec>& x) {
                    const Vec old(lp_old.begin(), lp_old.end()), r(rewards.begin(), rewards.end());
                    const std::optional<double> c = clip ? std::optional<double>(*clip) : std::nullopt;
                    return Vec{ppo_surrogate(x[0], old, r, c)};
                  }};
    });
  }
  return g;
}

}  // namespace

std::vector<CheckReport> check_kernels(int trials, uint64_t seed) {
  ls::Rng rng(seed);
  std::vector<CheckReport> out;
  for (const auto& [name, gen] : generators()) {
    CheckReport r{name, 0, 0.0};
    for (int t = 0; t < trials; ++t) {
      const Case c = gen(rng);
      r.worst = std::max(r.worst, run_case(c, rng));
      ++r.trials;
    }
    out.push_back(r);
  }
  return out;
}

CheckReport check_model(int trials, int coords, int32_t n_layers, uint64_t seed) {
  ls::Rng rng(seed);
  ls::ModelConfig cfg;
  cfg.n_layers = n_layers;
  cfg.n_heads = 6;
  cfg.d_model = 12;
  cfg.vocab_size = 8;
  cfg.max_len = 6;
  cfg.dropout = 0.0f;
  CheckReport report{"model", 0, 0.0};
  for (int trial = 0; trial < trials; ++trial) {
    ls::GptModel model(cfg, rng.next_u64());
    // Larger than the training init so every block is well inside its
    // nonlinear regime.
    for (size_t i = 0; i < model.parameters().size(); ++i) {
      const std::string& name = model.parameter_names()[i];
      const bool is_gain = name.ends_with(".g");
      const bool is_bias = name.ends_with(".b") || name.ends_with("_b") || name.ends_with(".bq") ||
                           name.ends_with(".bk") || name.ends_with(".bv") || name.ends_with(".bo");
      for (float& v : model.parameters()[i].data()) {
        v = static_cast<float>(is_gain ? 1.0 + 0.2 * rng.normal() : is_bias ? 0.1 * rng.normal() : 0.3 * rng.normal());
      }
    }
    const int64_t batch = between(rng, 1, 2), T = between(rng, 2, cfg.max_len);
    std::vector<int32_t> ids, targets;
    for (int64_t i = 0; i < batch * T; ++i) {
      ids.push_back(1 + static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(cfg.vocab_size - 1))));
      targets.push_back(static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(cfg.vocab_size))));
    }
    targets[0] = 3;  // at least one counted target

    ls::Tape tape;
    auto& params = model.parameters();
    ls::zero_grads(params);
    tape.backward(tape.cross_entropy(model.forward(tape, ids, batch, T, false), targets, ls::kPadId));

    ParamMap p = widen(model);
    auto loss = [&]() { return cross_entropy(gpt_forward(cfg, p, ids, batch, T), cfg.vocab_size, targets, ls::kPadId); };
    Vec analytic, numeric;
    for (int c = 0; c < coords; ++c) {
      const size_t ti = rng.uniform_int(params.size());
      const size_t ci = rng.uniform_int(static_cast<uint64_t>(params[ti].numel()));
      analytic.push_back(params[ti].grad()[ci]);
      double& v = p[model.parameter_names()[ti]][ci];
      const double keep = v;
      v = keep + kFdEpsilon;
      const double up = loss();
      v = keep - kFdEpsilon;
      const double down = loss();
      v = keep;
      numeric.push_back((up - down) / (2.0 * kFdEpsilon));
    }
    report.worst = std::max(report.worst, relative_error(analytic, numeric));
    ++report.trials;
  }
  return report;
}

}  // namespace oracle
