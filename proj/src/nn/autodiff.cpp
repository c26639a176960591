#include "strac/nn/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "strac/errors.hpp"

namespace strac::nn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

void require_grouping(const Tensor& x, int group, const char* op) {
  if (group < 1 || x.cols() % group != 0) {
    throw DimensionError(std::string(op) + ": " + std::to_string(x.cols()) +
                         " columns do not split into groups of " +
                         std::to_string(group));
  }
}

}  // namespace

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, nullptr});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents,
                 Backprop fn) {
  bool needs = false;
  for (Var p : parents) needs = needs || nodes_[p.id].requires_grad;
  nodes_.push_back(
      Node{std::move(value), Tensor(), needs, needs ? std::move(fn) : nullptr});
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (backward_done_) {
    throw UsageError("backward() already ran on this tape");
  }
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw UsageError("backward() needs a scalar loss, got " +
                     std::to_string(lv.rows()) + "x" +
                     std::to_string(lv.cols()));
  }
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor::Ones(1, 1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backprop && node.grad.size() != 0) {
      // The closure only touches nodes with smaller ids.
      const Tensor upstream = node.grad;
      node.backprop(*this, upstream);
    }
  }
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + std::to_string(av.rows()) + "x" +
                         std::to_string(av.cols()) + " times " +
                         std::to_string(bv.rows()) + "x" +
                         std::to_string(bv.cols()));
  }
  Tensor out = av * bv;
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), {a, b},
                  [a, b](Tape& tp, const Tensor& g) {
                    tp.accumulate(a, g);
                    tp.accumulate(b, g);
                  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), {a, b},
                  [a, b](Tape& tp, const Tensor& g) {
                    tp.accumulate(a, g);
                    tp.accumulate(b, -g);
                  });
}

Var scale(Tape& t, Var x, double s) {
  return t.record(t.value(x) * s, {x}, [x, s](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g * s);
  });
}

Var hadamard(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "hadamard");
  Tensor out = t.value(a).cwiseProduct(t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var add_colwise(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  if (bv.cols() != 1 || bv.rows() != xv.rows()) {
    throw DimensionError("add_colwise: bias must be " +
                         std::to_string(xv.rows()) + "x1");
  }
  Tensor out = xv.colwise() + bv.col(0);
  return t.record(std::move(out), {x, bias},
                  [x, bias](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, g);
                    if (tp.requires_grad(bias)) {
                      tp.accumulate(bias, g.rowwise().sum());
                    }
                  });
}

Var relu(Tape& t, Var x) {
  Tensor out = t.value(x).cwiseMax(0.0);
  return t.record(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    tp.accumulate(x, (xv.array() > 0.0).select(g, 0.0));
  });
}

Var square(Tape& t, Var x) {
  Tensor out = t.value(x).array().square().matrix();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    tp.accumulate(x, 2.0 * g.cwiseProduct(tp.value(x)));
  });
}

Var sum(Tape& t, Var x) {
  Tensor out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.record(std::move(out), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    tp.accumulate(x, Tensor::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

Var weighted_sum(Tape& t, Var x, const Tensor& weights) {
  require_same_shape(t.value(x), weights, "weighted_sum");
  Tensor out(1, 1);
  out(0, 0) = t.value(x).cwiseProduct(weights).sum();
  return t.record(std::move(out), {x},
                  [x, weights](Tape& tp, const Tensor& g) {
                    tp.accumulate(x, weights * g(0, 0));
                  });
}

Var group_sum(Tape& t, Var x, int group) {
  const Tensor& xv = t.value(x);
  require_grouping(xv, group, "group_sum");
  const Eigen::Index graphs = xv.cols() / group;
  Tensor out = Tensor::Zero(xv.rows(), graphs);
  for (Eigen::Index b = 0; b < graphs; ++b) {
    out.col(b) = xv.middleCols(b * group, group).rowwise().sum();
  }
  return t.record(std::move(out), {x}, [x, group](Tape& tp, const Tensor& g) {
    Tensor dx(g.rows(), g.cols() * group);
    for (Eigen::Index b = 0; b < g.cols(); ++b) {
      dx.middleCols(b * group, group).colwise() = g.col(b);
    }
    tp.accumulate(x, dx);
  });
}

Var group_sum_except_self(Tape& t, Var x, int group) {
  const Tensor& xv = t.value(x);
  require_grouping(xv, group, "group_sum_except_self");
  Tensor out(xv.rows(), xv.cols());
  for (Eigen::Index b = 0; b < xv.cols() / group; ++b) {
    auto block = xv.middleCols(b * group, group);
    const Vector total = block.rowwise().sum();
    out.middleCols(b * group, group) = (-block).colwise() + total;
  }
  // The map is symmetric: d out_j / d x_i = 1 for i != j.
  return t.record(std::move(out), {x}, [x, group](Tape& tp, const Tensor& g) {
    Tensor dx(g.rows(), g.cols());
    for (Eigen::Index b = 0; b < g.cols() / group; ++b) {
      auto block = g.middleCols(b * group, group);
      const Vector total = block.rowwise().sum();
      dx.middleCols(b * group, group) = (-block).colwise() + total;
    }
    tp.accumulate(x, dx);
  });
}

Var repeat_cols(Tape& t, Var x, int group) {
  if (group < 1) throw DimensionError("repeat_cols: group must be >= 1");
  const Tensor& xv = t.value(x);
  Tensor out(xv.rows(), xv.cols() * group);
  for (Eigen::Index b = 0; b < xv.cols(); ++b) {
    out.middleCols(b * group, group).colwise() = xv.col(b);
  }
  return t.record(std::move(out), {x}, [x, group](Tape& tp, const Tensor& g) {
    Tensor dx(g.rows(), g.cols() / group);
    for (Eigen::Index b = 0; b < dx.cols(); ++b) {
      dx.col(b) = g.middleCols(b * group, group).rowwise().sum();
    }
    tp.accumulate(x, dx);
  });
}

Var hierarchical_compose(Tape& t, Var h, Var l) {
  const Tensor& hv = t.value(h);
  const Tensor& lv = t.value(l);
  if (hv.rows() != 1 || hv.cols() != lv.cols()) {
    throw DimensionError("hierarchical_compose: h must be 1 x cols(l)");
  }
  std::vector<int> argmax(static_cast<std::size_t>(lv.cols()));
  Tensor out(lv.rows(), lv.cols());
  for (Eigen::Index c = 0; c < lv.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < lv.rows(); ++r) {
      if (lv(r, c) > lv(best, c)) best = r;
    }
    argmax[static_cast<std::size_t>(c)] = static_cast<int>(best);
    const double top = lv(best, c);
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      out(r, c) = hv(0, c) + (lv(r, c) - top);
    }
    // Exact identity for the maximising entry.
    out(best, c) = hv(0, c);
  }
  return t.record(std::move(out), {h, l},
                  [h, l, argmax](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(h)) tp.accumulate(h, g.colwise().sum());
                    if (tp.requires_grad(l)) {
                      Tensor dl = g;
                      const Tensor col_sums = g.colwise().sum();
                      for (Eigen::Index c = 0; c < g.cols(); ++c) {
                        dl(argmax[static_cast<std::size_t>(c)], c) -=
                            col_sums(0, c);
                      }
                      tp.accumulate(l, dl);
                    }
                  });
}

Var stack_nodes(Tape& t, Var first, Var slots, int n) {
  const Tensor& fv = t.value(first);
  const Tensor& sv = t.value(slots);
  if (n < 1 || sv.cols() != fv.cols() * n) {
    throw DimensionError("stack_nodes: slot columns must be n * batch");
  }
  const Eigen::Index ki = fv.rows();
  const Eigen::Index ks = sv.rows();
  Tensor out(ki + ks * n, fv.cols());
  for (Eigen::Index b = 0; b < fv.cols(); ++b) {
    out.col(b).head(ki) = fv.col(b);
    for (int i = 0; i < n; ++i) {
      out.col(b).segment(ki + ks * i, ks) = sv.col(b * n + i);
    }
  }
  return t.record(std::move(out), {first, slots},
                  [first, slots, n, ki, ks](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(first)) {
                      tp.accumulate(first, g.topRows(ki));
                    }
                    if (tp.requires_grad(slots)) {
                      Tensor ds(ks, g.cols() * n);
                      for (Eigen::Index b = 0; b < g.cols(); ++b) {
                        for (int i = 0; i < n; ++i) {
                          ds.col(b * n + i) = g.col(b).segment(ki + ks * i, ks);
                        }
                      }
                      tp.accumulate(slots, ds);
                    }
                  });
}

Var softmax_cols(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out(xv.rows(), xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    const double top = xv.col(c).maxCoeff();
    out.col(c) = (xv.col(c).array() - top).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return t.record(out, {x}, [x, out](Tape& tp, const Tensor& g) {
    Tensor dx(out.rows(), out.cols());
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double inner = g.col(c).dot(out.col(c));
      dx.col(c) = out.col(c).cwiseProduct(
          (g.col(c).array() - inner).matrix());
    }
    tp.accumulate(x, dx);
  });
}

Var masked_log_softmax_cols(Tape& t, Var x, const Tensor& mask) {
  const Tensor& xv = t.value(x);
  require_same_shape(xv, mask, "masked_log_softmax_cols");
  Tensor out = Tensor::Zero(xv.rows(), xv.cols());
  Tensor probs = Tensor::Zero(xv.rows(), xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (mask(r, c) != 0.0 && xv(r, c) > top) top = xv(r, c);
    }
    if (!std::isfinite(top)) {
      throw UsageError("masked_log_softmax_cols: column with every entry masked");
    }
    double z = 0.0;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (mask(r, c) != 0.0) z += std::exp(xv(r, c) - top);
    }
    const double log_z = top + std::log(z);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (mask(r, c) != 0.0) {
        out(r, c) = xv(r, c) - log_z;
        probs(r, c) = std::exp(out(r, c));
      }
    }
  }
  return t.record(std::move(out), {x},
                  [x, mask, probs](Tape& tp, const Tensor& g) {
                    Tensor gm = g.cwiseProduct(mask);
                    Tensor dx(gm.rows(), gm.cols());
                    for (Eigen::Index c = 0; c < gm.cols(); ++c) {
                      dx.col(c) = gm.col(c) - probs.col(c) * gm.col(c).sum();
                    }
                    tp.accumulate(x, dx);
                  });
}

Var entropy_from_log_probs(Tape& t, Var logp, const Tensor& mask) {
  const Tensor& lv = t.value(logp);
  require_same_shape(lv, mask, "entropy_from_log_probs");
  const Tensor p = lv.array().exp().matrix().cwiseProduct(mask);
  Tensor out = -(p.cwiseProduct(lv)).colwise().sum();
  return t.record(std::move(out), {logp},
                  [logp, p](Tape& tp, const Tensor& g) {
                    // d/dlogp of -p log p with p = exp(logp) is -p (logp + 1).
                    const Tensor& lv2 = tp.value(logp);
                    Tensor d = -(p.array() * (lv2.array() + 1.0)).matrix();
                    for (Eigen::Index c = 0; c < d.cols(); ++c) {
                      d.col(c) *= g(0, c);
                    }
                    tp.accumulate(logp, d);
                  });
}

Var pick_rows(Tape& t, Var x, std::span<const int> rows) {
  const Tensor& xv = t.value(x);
  if (static_cast<Eigen::Index>(rows.size()) != xv.cols()) {
    throw DimensionError("pick_rows: need one row index per column");
  }
  Tensor out(1, xv.cols());
  std::vector<int> idx(rows.begin(), rows.end());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    const int r = idx[static_cast<std::size_t>(c)];
    if (r < 0 || r >= xv.rows()) {
      throw DimensionError("pick_rows: row index out of range");
    }
    out(0, c) = xv(r, c);
  }
  const Eigen::Index nrows = xv.rows();
  return t.record(std::move(out), {x},
                  [x, idx, nrows](Tape& tp, const Tensor& g) {
                    Tensor dx = Tensor::Zero(nrows, g.cols());
                    for (Eigen::Index c = 0; c < g.cols(); ++c) {
                      dx(idx[static_cast<std::size_t>(c)], c) = g(0, c);
                    }
                    tp.accumulate(x, dx);
                  });
}

Var col_dot(Tape& t, Var a, Var c) {
  require_same_shape(t.value(a), t.value(c), "col_dot");
  Tensor out = t.value(a).cwiseProduct(t.value(c)).colwise().sum();
  return t.record(std::move(out), {a, c}, [a, c](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor da = tp.value(c);
      for (Eigen::Index k = 0; k < da.cols(); ++k) da.col(k) *= g(0, k);
      tp.accumulate(a, da);
    }
    if (tp.requires_grad(c)) {
      Tensor dc = tp.value(a);
      for (Eigen::Index k = 0; k < dc.cols(); ++k) dc.col(k) *= g(0, k);
      tp.accumulate(c, dc);
    }
  });
}

}  // namespace strac::nn
