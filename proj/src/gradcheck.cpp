#include "aae/gradcheck.hpp"

#include <cmath>
#include <random>

#include "aae/ctc.hpp"
#include "aae/model.hpp"
#include "aae/rng.hpp"
#include "aae/tensor.hpp"

namespace aae {

namespace {

using M = Eigen::MatrixXd;

M random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  M m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

// Runs one check: builds the graph via `build` on a tracked leaf, compares
// the leaf gradient against finite differences of the forward value.
void check_one(CheckSummary& out, const std::string& name, const M& x0,
               const std::function<Tensor(Tape&, const Tensor&)>& build,
               double tol) {
  Tape tape;
  Tensor x = tape.leaf(x0);
  Tensor root = build(tape, x);
  tape.backward(root);
  const M analytic = x.grad();
  const M fd = finite_difference_grad(
      [&](const M& xv) {
        Tape t2;
        Tensor x2 = t2.leaf(xv);
        return build(t2, x2).item();
      },
      x0);
  double worst = 0.0;
  ++out.checks;
  if (!grads_match(analytic, fd, tol, &worst))
    out.failures.push_back(name + " (rel err " + std::to_string(worst) + ")");
  out.worst_err = std::max(out.worst_err, worst);
}

}  // namespace

Eigen::MatrixXd finite_difference_grad(
    const std::function<double(const Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& x, double h) {
  M g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      M xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      g(i, j) = (f(xp) - f(xm)) / (2.0 * h);
    }
  return g;
}

bool grads_match(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd,
                 double tol, double* worst_rel) {
  bool ok = true;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j), b = fd(i, j);
      const double diff = std::abs(a - b);
      if (a == 0.0) {
        if (diff > 1e-7) ok = false;
        continue;
      }
      const double rel = diff / std::max(std::abs(a), std::abs(b));
      worst = std::max(worst, rel);
      if (rel > tol && diff > 1e-7) ok = false;
    }
  if (worst_rel) *worst_rel = worst;
  return ok;
}

void CheckSummary::merge(const CheckSummary& o) {
  checks += o.checks;
  worst_err = std::max(worst_err, o.worst_err);
  failures.insert(failures.end(), o.failures.begin(), o.failures.end());
}

CheckSummary gradcheck_primitives(std::uint64_t seed, double tol) {
  CheckSummary out;
  auto rng = make_rng(seed, 0x505249ULL);
  const M a4 = random_matrix(rng, 4, 3);
  const M b34 = random_matrix(rng, 3, 4);
  const M row = random_matrix(rng, 1, 3);

  // all constants pre-drawn: check_one replays the builder for every
  // finite-difference evaluation
  const M k43a = random_matrix(rng, 4, 3);
  const M k43b = random_matrix(rng, 4, 3);
  const M k43c = random_matrix(rng, 4, 3);
  const M k43d = random_matrix(rng, 4, 3);
  const M k42a = random_matrix(rng, 4, 2);
  const M k42b = random_matrix(rng, 4, 2);
  const M k23 = random_matrix(rng, 2, 3);

  auto with_const = [&](auto fn) {
    return [fn](Tape&, const Tensor& x) { return fn(x); };
  };

  check_one(out, "add", a4, with_const([&](const Tensor& x) {
              return sum(add(x, Tensor(k43a)));
            }),
            tol);
  check_one(out, "add-broadcast", a4, with_const([&](const Tensor& x) {
              return sum(mul(add(x, Tensor(row)), Tensor(k43b)));
            }),
            tol);
  check_one(out, "add-broadcast-grad-of-row", row,
            with_const([&](const Tensor& x) {
              return sum(tanh_op(add(Tensor(a4), x)));
            }),
            tol);
  check_one(out, "sub", a4, with_const([&](const Tensor& x) {
              return sum(sub(x, Tensor(k43c)));
            }),
            tol);
  check_one(out, "mul", a4, with_const([&](const Tensor& x) {
              return sum(mul(x, Tensor(k43d)));
            }),
            tol);
  check_one(out, "scale", a4,
            with_const([](const Tensor& x) { return sum(scale(x, -2.5)); }), tol);
  check_one(out, "matmul-lhs", a4, with_const([&](const Tensor& x) {
              return sum(tanh_op(matmul(x, Tensor(b34))));
            }),
            tol);
  check_one(out, "matmul-rhs", b34, with_const([&](const Tensor& x) {
              return sum(tanh_op(matmul(Tensor(a4), x)));
            }),
            tol);
  check_one(out, "tanh", a4,
            with_const([](const Tensor& x) { return sum(tanh_op(x)); }), tol);
  check_one(out, "sigmoid", a4,
            with_const([](const Tensor& x) { return sum(sigmoid(x)); }), tol);
  check_one(out, "relu", a4,
            with_const([](const Tensor& x) { return sum(relu(x)); }), tol);
  check_one(out, "exp", a4,
            with_const([](const Tensor& x) { return sum(exp_op(scale(x, 0.3))); }),
            tol);
  check_one(out, "transpose", a4, with_const([&](const Tensor& x) {
              return sum(matmul(transpose(x), Tensor(k42a)));
            }),
            tol);
  check_one(out, "concat_rows", a4, with_const([&](const Tensor& x) {
              return sum(tanh_op(concat_rows({x, Tensor(k23), x})));
            }),
            tol);
  check_one(out, "concat_cols", a4, with_const([&](const Tensor& x) {
              return sum(tanh_op(concat_cols({x, Tensor(k42b)})));
            }),
            tol);
  check_one(out, "slice_rows", a4, with_const([](const Tensor& x) {
              return sum(tanh_op(slice_rows(x, 1, 2)));
            }),
            tol);
  check_one(out, "slice_cols", a4, with_const([](const Tensor& x) {
              return sum(tanh_op(slice_cols(x, 0, 2)));
            }),
            tol);
  check_one(out, "log_softmax", a4, with_const([](const Tensor& x) {
              return pick(log_softmax(x), 1, 2);
            }),
            tol);
  check_one(out, "log_softmax-sum", a4, with_const([&](const Tensor& x) {
              return sum(mul(log_softmax(x), Tensor(k43a)));
            }),
            tol);
  check_one(out, "gather_rows", a4, with_const([](const Tensor& x) {
              return sum(tanh_op(gather_rows(x, {2, 0, 2})));
            }),
            tol);
  check_one(out, "pick", a4,
            with_const([](const Tensor& x) { return pick(x, 3, 1); }), tol);
  {
    const M kern = random_matrix(rng, 5 * 2, 3);
    const M bias = random_matrix(rng, 1, 3);
    const M inp = random_matrix(rng, 6, 2);
    check_one(out, "conv1d-input", inp, with_const([&](const Tensor& x) {
                return sum(tanh_op(conv1d(x, Tensor(kern), Tensor(bias), 5)));
              }),
              tol);
    check_one(out, "conv1d-kernel", kern, with_const([&](const Tensor& x) {
                return sum(tanh_op(conv1d(Tensor(inp), x, Tensor(bias), 5)));
              }),
              tol);
    check_one(out, "conv1d-bias", bias, with_const([&](const Tensor& x) {
                return sum(tanh_op(conv1d(Tensor(inp), Tensor(kern), x, 5)));
              }),
              tol);
  }
  check_one(out, "add_scalars", a4, with_const([](const Tensor& x) {
              return add_scalars({sum(tanh_op(x)), pick(x, 0, 0), sum(x)});
            }),
            tol);
  return out;
}

CheckSummary gradcheck_composites(std::uint64_t seed, int count, double tol) {
  CheckSummary out;
  for (int n = 0; n < count; ++n) {
    auto rng = make_rng(seed, 0x434f4d50ULL + static_cast<std::uint64_t>(n));
    std::uniform_int_distribution<int> dim(1, 8);
    const Eigen::Index r0 = dim(rng), c0 = dim(rng);
    const M x0 = random_matrix(rng, r0, c0);
    std::uniform_int_distribution<int> depth_dist(1, 6);
    const int depth = depth_dist(rng);
    // pre-drawn choices so the builder is deterministic across replays
    std::vector<int> ops(depth);
    std::vector<M> consts;
    std::uniform_int_distribution<int> op_dist(0, 9);
    Eigen::Index r = r0, c = c0;
    for (int d = 0; d < depth; ++d) {
      int op = op_dist(rng);
      // shape-dependent fixups
      if (op == 7 && r < 2) op = 0;  // slice needs rows
      ops[d] = op;
      switch (op) {
        case 0: consts.push_back(random_matrix(rng, r, c)); break;  // add
        case 1: consts.push_back(random_matrix(rng, r, c)); break;  // mul
        case 2: {  // matmul
          const Eigen::Index c2 = dim(rng);
          consts.push_back(random_matrix(rng, c, c2));
          c = c2;
          break;
        }
        case 3: break;  // tanh
        case 4: break;  // sigmoid
        case 5: break;  // log_softmax
        case 6: std::swap(r, c); break;  // transpose
        case 7: r = r - 1; break;        // slice_rows(0, r-1)
        case 8: consts.push_back(random_matrix(rng, 2, c)); r += 2; break; // concat
        case 9: break;  // exp(0.3 x)
      }
    }
    auto build = [&](Tape&, const Tensor& leaf) {
      Tensor t = leaf;
      std::size_t ci = 0;
      for (int d = 0; d < depth; ++d) {
        switch (ops[d]) {
          case 0: t = add(t, Tensor(consts[ci++])); break;
          case 1: t = mul(t, Tensor(consts[ci++])); break;
          case 2: t = matmul(t, Tensor(consts[ci++])); break;
          case 3: t = tanh_op(t); break;
          case 4: t = sigmoid(t); break;
          case 5: t = log_softmax(t); break;
          case 6: t = transpose(t); break;
          case 7: t = slice_rows(t, 1, t.rows() - 1); break;
          case 8: t = concat_rows({t, Tensor(consts[ci++])}); break;
          case 9: t = exp_op(scale(t, 0.3)); break;
        }
      }
      return sum(t);
    };
    check_one(out, "composite-" + std::to_string(n), x0, build, tol);
  }
  return out;
}

CheckSummary gradcheck_model(std::uint64_t seed, int count, double tol) {
  CheckSummary out;
  ModelConfig cfg;
  cfg.feat_dim = 3;
  cfg.content_size = 3;
  cfg.enc_hidden = 3;
  cfg.enc_layers = 2;
  cfg.dec_hidden = 4;
  cfg.embed_dim = 3;
  cfg.att_dim = 4;
  cfg.att_conv_channels = 2;
  cfg.att_conv_kernel = 3;
  for (int n = 0; n < count; ++n) {
    auto rng = make_rng(seed, 0x4d4f44ULL + static_cast<std::uint64_t>(n));
    HybridModel model(cfg, rng());
    std::uniform_int_distribution<int> t_dist(3, 6), l_dist(1, 3),
        tok(1, cfg.content_size);
    const Eigen::Index t_len = t_dist(rng);
    const M x0 = random_matrix(rng, t_len, cfg.feat_dim);
    std::vector<int> y(static_cast<std::size_t>(l_dist(rng)));
    for (int& id : y) id = tok(rng);

    check_one(out, "encode-sum-" + std::to_string(n), x0,
              [&](Tape& tape, const Tensor& x) {
                BoundModel bm(model, &tape, false);
                return sum(encode(bm, x));
              },
              tol);
    check_one(out, "token-losses-" + std::to_string(n), x0,
              [&](Tape& tape, const Tensor& x) {
                BoundModel bm(model, &tape, false);
                return add_scalars(
                    token_losses(bm, model.vocab(), x, nullptr, y));
              },
              tol);
    check_one(out, "ctc-through-model-" + std::to_string(n), x0,
              [&](Tape& tape, const Tensor& x) {
                BoundModel bm(model, &tape, false);
                return ctc_loss(ctc_logprobs(bm, encode(bm, x)), y);
              },
              tol);
  }
  return out;
}

CheckSummary ctc_oracle_check(std::uint64_t seed, int count) {
  CheckSummary out;
  // worked example: uniform 0.5 frame probs, T=2, y="a" -> -ln 0.75
  {
    M lp(2, 2);
    lp.setConstant(std::log(0.5));
    const double dp = ctc_loss(Tensor(lp), {1}).item();
    const double expect = -std::log(0.75);
    ++out.checks;
    if (std::abs(dp - expect) > 1e-12)
      out.failures.push_back("ctc worked example -ln(0.75)");
    const double bf = brute_force_ctc(lp, {1});
    ++out.checks;
    if (std::abs(dp - bf) > 1e-8)
      out.failures.push_back("ctc worked example DP vs brute force");
  }
  int made = 0;
  std::uint64_t stream = 0;
  while (made < count) {
    auto rng = make_rng(seed, 0x435443ULL + stream++);
    std::uniform_int_distribution<int> t_dist(1, 6), l_dist(0, 3), k_dist(1, 4);
    const int t_len = t_dist(rng), k = k_dist(rng);
    std::vector<int> y(static_cast<std::size_t>(l_dist(rng)));
    std::uniform_int_distribution<int> tok(1, k);
    for (int& id : y) id = tok(rng);
    if (!ctc_feasible(t_len, y)) continue;
    ++made;
    M logits = random_matrix(rng, t_len, k + 1, 1.5);
    Tape tape;
    Tensor leaf = tape.leaf(logits);
    Tensor lp = log_softmax(leaf);
    Tensor loss = ctc_loss(lp, y);
    const double bf = brute_force_ctc(lp.value(), y);
    ++out.checks;
    if (std::abs(loss.item() - bf) > 1e-8) {
      out.failures.push_back("ctc instance " + std::to_string(made) +
                             " DP vs brute force");
      out.worst_err = std::max(out.worst_err, std::abs(loss.item() - bf));
    }
    // gradient vs finite differences, through the softmax so rows stay
    // normalized at the ctc_loss boundary
    tape.backward(loss);
    const M analytic = leaf.grad();
    const M fd = finite_difference_grad(
        [&](const M& lv) {
          Tape t2;
          return ctc_loss(log_softmax(t2.leaf(lv)), y).item();
        },
        logits);
    double worst = 0.0;
    ++out.checks;
    if (!grads_match(analytic, fd, 1e-4, &worst))
      out.failures.push_back("ctc grad instance " + std::to_string(made));
    out.worst_err = std::max(out.worst_err, worst);
  }
  return out;
}

}  // namespace aae
