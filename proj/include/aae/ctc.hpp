#pragma once

#include <vector>

#include "aae/tensor.hpp"

namespace aae {

// Blank id is 0 throughout; labels are ids in [1..K].

// Interleaves blanks around the labels: (b, y1, b, y2, ..., yL, b).
std::vector<int> expand_with_blanks(const std::vector<int>& labels);

// True when t_len frames can carry the labeling (repeats need a blank between).
bool ctc_feasible(Eigen::Index t_len, const std::vector<int>& labels);

// -log P(labels | logprobs), summed over all valid alignments via the
// log-space forward DP. logprobs is Tx(K+1) with column 0 = blank.
// Differentiable w.r.t. logprobs. Throws InfeasibleError when no alignment fits.
Tensor ctc_loss(const Tensor& logprobs, const std::vector<int>& labels);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int> ctc_greedy_decode(const Eigen::MatrixXd& logprobs);

// Exact enumeration over all (K+1)^T alignments; the test oracle for ctc_loss.
// Returns +inf for an infeasible labeling. Throws when (K+1)^T > 10^6.
double brute_force_ctc(const Eigen::MatrixXd& logprobs,
                       const std::vector<int>& labels);

}  // namespace aae
