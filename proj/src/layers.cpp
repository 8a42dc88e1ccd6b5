#include "dygraft/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace dygraft::nn {

void ensure_linear(ParamStore& ps, std::mt19937_64& rng, const std::string& name,
                   int in, int out) {
  if (ps.has(name + ".W")) return;
  ps.create(name + ".W", in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  ps.create_zeros(name + ".b", 1, out);
}

Tape::Var linear(Tape& t, ParamBinding& p, const std::string& name, Tape::Var x) {
  return t.add(t.matmul(x, p[name + ".W"]), p[name + ".b"]);
}

void ensure_mha(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int d_model) {
  ensure_linear(ps, rng, prefix + ".q", d_model, d_model);
  ensure_linear(ps, rng, prefix + ".k", d_model, d_model);
  ensure_linear(ps, rng, prefix + ".v", d_model, d_model);
  ensure_linear(ps, rng, prefix + ".o", d_model, d_model);
}

Tape::Var mha(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x_q,
              Tape::Var x_kv, int n_heads, bool causal) {
  const int d = static_cast<int>(t.val(x_q).cols());
  if (d % n_heads != 0) throw std::invalid_argument("mha: d_model % n_heads != 0");
  const int dk = d / n_heads;
  const int nq = static_cast<int>(t.val(x_q).rows());
  const int nk = static_cast<int>(t.val(x_kv).rows());

  Tape::Var q = linear(t, p, prefix + ".q", x_q);
  Tape::Var k = linear(t, p, prefix + ".k", x_kv);
  Tape::Var v = linear(t, p, prefix + ".v", x_kv);

  Tape::Var mask{};
  if (causal) {
    if (nq != nk) throw std::invalid_argument("mha: causal needs square attention");
    Mat m = Mat::Zero(nq, nk);
    for (int i = 0; i < nq; ++i)
      for (int j = i + 1; j < nk; ++j) m(i, j) = -1e30;
    mask = t.input(std::move(m));
  }

  Tape::Var out{};
  for (int h = 0; h < n_heads; ++h) {
    Tape::Var qh = t.slice_cols(q, h * dk, dk);
    Tape::Var kh = t.slice_cols(k, h * dk, dk);
    Tape::Var vh = t.slice_cols(v, h * dk, dk);
    Tape::Var scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(dk));
    if (causal) scores = t.add(scores, mask);
    Tape::Var attn = t.softmax_rows(scores);
    Tape::Var oh = t.matmul(attn, vh);
    out = h == 0 ? oh : t.concat_cols(out, oh);
  }
  return linear(t, p, prefix + ".o", out);
}

void ensure_ffn(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int d_model) {
  ensure_linear(ps, rng, prefix + ".f1", d_model, 2 * d_model);
  ensure_linear(ps, rng, prefix + ".f2", 2 * d_model, d_model);
}

Tape::Var ffn(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x) {
  return linear(t, p, prefix + ".f2", t.relu(linear(t, p, prefix + ".f1", x)));
}

void ensure_transformer_block(ParamStore& ps, std::mt19937_64& rng,
                              const std::string& prefix, int d_model) {
  ensure_mha(ps, rng, prefix + ".attn", d_model);
  ensure_ffn(ps, rng, prefix + ".ffn", d_model);
}

Tape::Var transformer_block(Tape& t, ParamBinding& p, const std::string& prefix,
                            Tape::Var x, int n_heads, bool causal) {
  Tape::Var a = t.add(x, mha(t, p, prefix + ".attn", x, x, n_heads, causal));
  return t.add(a, ffn(t, p, prefix + ".ffn", a));
}

void ensure_gru(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int in, int d) {
  for (const char* g : {"z", "r", "h"}) {
    ensure_linear(ps, rng, prefix + "." + g + "x", in, d);
    if (!ps.has(prefix + "." + g + "u.W"))
      ps.create(prefix + "." + g + "u.W", d, d, 1.0 / std::sqrt(static_cast<double>(d)),
                rng);
  }
}

Tape::Var gru_cell(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x,
                   Tape::Var h) {
  auto gate = [&](const char* g) {
    return t.add(linear(t, p, prefix + "." + g + "x", x),
                 t.matmul(h, p[prefix + "." + g + "u.W"]));
  };
  Tape::Var z = t.sigmoid(gate("z"));
  Tape::Var r = t.sigmoid(gate("r"));
  Tape::Var rh = t.mul(r, h);
  Tape::Var hh = t.tanh(t.add(linear(t, p, prefix + ".hx", x),
                              t.matmul(rh, p[prefix + ".hu.W"])));
  // h' = (1-z)*h + z*hh
  Tape::Var one_minus_z = t.add_const(t.scale(z, -1.0), 1.0);
  return t.add(t.mul(one_minus_z, h), t.mul(z, hh));
}

Tape::Var gru_sequence(Tape& t, ParamBinding& p, const std::string& prefix,
                       Tape::Var xs, Tape::Var h0) {
  Tape::Var h = h0;
  const int n = static_cast<int>(t.val(xs).rows());
  for (int i = 0; i < n; ++i) h = gru_cell(t, p, prefix, t.slice_rows(xs, i, 1), h);
  return h;
}

void ensure_time2vec(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                     int dim) {
  if (dim < 2) throw std::invalid_argument("time2vec: dim must be >= 2");
  if (ps.has(prefix + ".w")) return;
  ps.create(prefix + ".w", 1, dim, 1.0, rng);
  ps.create_zeros(prefix + ".b", 1, dim);
}

Tape::Var time2vec_batch(Tape& t, ParamBinding& p, const std::string& prefix,
                         Tape::Var deltas, int dim) {
  Tape::Var z = t.add(t.matmul(deltas, p[prefix + ".w"]), p[prefix + ".b"]);
  Tape::Var lin = t.slice_cols(z, 0, 1);
  Tape::Var per = t.sin(t.slice_cols(z, 1, dim - 1));
  return t.concat_cols(lin, per);
}

Tape::Var time2vec(Tape& t, ParamBinding& p, const std::string& prefix, double delta,
                   int dim) {
  Mat d(1, 1);
  d(0, 0) = delta;
  return time2vec_batch(t, p, prefix, t.input(std::move(d)), dim);
}

}  // namespace dygraft::nn
