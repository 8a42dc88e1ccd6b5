#pragma once

#include <string>

#include "dygraft/tape.hpp"

namespace dygraft::nn {

// Shared layer builders. ensure_* registers the parameter matrices under a
// name prefix if they do not exist yet; the apply functions bind them onto
// the tape. All sequence inputs are row-major: one row per position.

void ensure_linear(ParamStore& ps, std::mt19937_64& rng, const std::string& name,
                   int in, int out);
Tape::Var linear(Tape& t, ParamBinding& p, const std::string& name, Tape::Var x);

void ensure_mha(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int d_model);
// Multi-head attention of queries x_q (Nq x d) over x_kv (Nk x d). When
// causal, position i of x_q only attends to positions <= i of x_kv
// (requires Nq == Nk).
Tape::Var mha(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x_q,
              Tape::Var x_kv, int n_heads, bool causal);

void ensure_ffn(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int d_model);
Tape::Var ffn(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x);

// Pre-norm-free residual block: x + MHA(x), then + FFN. One per encoder layer.
void ensure_transformer_block(ParamStore& ps, std::mt19937_64& rng,
                              const std::string& prefix, int d_model);
Tape::Var transformer_block(Tape& t, ParamBinding& p, const std::string& prefix,
                            Tape::Var x, int n_heads, bool causal);

void ensure_gru(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                int in, int d);
Tape::Var gru_cell(Tape& t, ParamBinding& p, const std::string& prefix, Tape::Var x,
                   Tape::Var h);
// Runs the cell over each row of xs in order, returning the last hidden state.
Tape::Var gru_sequence(Tape& t, ParamBinding& p, const std::string& prefix,
                       Tape::Var xs, Tape::Var h0);

// Functional time encoding: component 0 is linear in delta, the rest are
// sin(freq * delta + phase) with learned frequencies and phases.
void ensure_time2vec(ParamStore& ps, std::mt19937_64& rng, const std::string& prefix,
                     int dim);
Tape::Var time2vec(Tape& t, ParamBinding& p, const std::string& prefix, double delta,
                   int dim);
// Column vector of deltas (N x 1) -> N x dim.
Tape::Var time2vec_batch(Tape& t, ParamBinding& p, const std::string& prefix,
                         Tape::Var deltas, int dim);

}  // namespace dygraft::nn
