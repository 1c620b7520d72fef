#include "pprec/core/tape.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "pprec/common/error.hpp"
#include "pprec/core/kernels.hpp"

namespace pprec::core {

namespace {

const kernels::Kernels& K() { return kernels::active(); }

// Stable sigmoid(-x): never exponentiates a large positive argument.
double sigmoid_neg(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

// Copy the d-wide column block of head h into a packed [rows x d] buffer.
void pack_head(const Tensor& src, std::size_t head, std::size_t d, Tensor& dst) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::memcpy(dst.row_ptr(r), src.row_ptr(r) + head * d, d * sizeof(double));
  }
}

// dst block of head h += packed [rows x d] buffer.
void scatter_head(const Tensor& packed, std::size_t head, std::size_t d, Tensor& dst) {
  for (std::size_t r = 0; r < packed.rows(); ++r) {
    K().axpy(1.0, packed.row_ptr(r), dst.row_ptr(r) + head * d, d);
  }
}

// In-place row softmax with max subtraction.
void softmax_rows_inplace(Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double* row = t.row_ptr(r);
    double mx = row[0];
    for (std::size_t c = 1; c < t.cols(); ++c) {
      mx = std::max(mx, row[c]);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      s += row[c];
    }
    const double inv = 1.0 / s;
    for (std::size_t c = 0; c < t.cols(); ++c) {
      row[c] *= inv;
    }
  }
}

// Given softmax output y and upstream dy, write dx += y * (dy - <dy, y>) row-wise.
void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx, double scale) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const double* yr = y.row_ptr(r);
    const double* gr = dy.row_ptr(r);
    double* dr = dx.row_ptr(r);
    const double dotv = K().dot(gr, yr, y.cols());
    for (std::size_t c = 0; c < y.cols(); ++c) {
      dr[c] += scale * yr[c] * (gr[c] - dotv);
    }
  }
}

}  // namespace

Var Tape::make_node(Tensor value, Backprop backprop) {
  if (!grad_enabled_) {
    backprop = nullptr;
  }
  nodes_.push_back(Node{std::move(value), std::move(backprop)});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(std::uint32_t id) {
  Tensor& g = grads_[id];
  if (g.empty()) {
    const Tensor& v = nodes_[id].value;
    g = Tensor::zeros(v.rows(), v.cols());
  }
  return g;
}

void Tape::accumulate(std::uint32_t id, const Tensor& delta) {
  Tensor& g = grad_buf(id);
  K().add(g.data(), delta.data(), g.data(), g.size());
}

void Tape::check_same_shape(const Tensor& a, const Tensor& b, const char* op) const {
  if (!a.same_shape(b)) {
    throw NumericError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                       b.shape_str());
  }
}

Var Tape::constant(Tensor value) { return make_node(std::move(value), nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) {
    return Var{this, it->second};
  }
  Var v = make_node(p.value, nullptr);
  param_nodes_.emplace(&p, v.id);
  if (grad_enabled_) {
    param_order_.emplace_back(&p, v.id);
  }
  return v;
}

Var Tape::lookup_rows(Parameter& table, std::vector<int> ids) {
  const Tensor& tv = table.value;
  const std::size_t dim = tv.cols();
  Tensor out(ids.size(), dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw NumericError("lookup_rows: row " + std::to_string(id) + " outside table " +
                         tv.shape_str());
    }
    std::memcpy(out.row_ptr(i), tv.row_ptr(static_cast<std::size_t>(id)), dim * sizeof(double));
  }
  Parameter* tp = &table;
  return make_node(std::move(out),
                   [tp, ids = std::move(ids), dim](Tape&, std::uint32_t, const Tensor& g) {
                     for (std::size_t i = 0; i < ids.size(); ++i) {
                       K().axpy(1.0, g.row_ptr(i), tp->grad.row_ptr(static_cast<std::size_t>(ids[i])),
                                dim);
                     }
                   });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  if (av.cols() != bv.rows()) {
    throw NumericError("matmul: inner dimensions differ, " + av.shape_str() + " * " +
                       bv.shape_str());
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  K().gemm_nn(av.data(), bv.data(), out.data(), m, k, n, false);
  return make_node(std::move(out),
                   [aid = a.id, bid = b.id, m, k, n](Tape& t, std::uint32_t, const Tensor& g) {
                     const Tensor& aval = t.node_value(aid);
                     const Tensor& bval = t.node_value(bid);
                     K().gemm_nt(g.data(), bval.data(), t.grad_buf(aid).data(), m, n, k, true);
                     K().gemm_tn(aval.data(), g.data(), t.grad_buf(bid).data(), k, m, n, true);
                   });
}

Var Tape::transpose(Var a) {
  const Tensor& av = node_value(a.id);
  Tensor out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < av.cols(); ++c) {
      out.at(c, r) = av.at(r, c);
    }
  }
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t, const Tensor& g) {
    Tensor& da = t.grad_buf(aid);
    for (std::size_t r = 0; r < da.rows(); ++r) {
      for (std::size_t c = 0; c < da.cols(); ++c) {
        da.at(r, c) += g.at(c, r);
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  check_same_shape(av, bv, "add");
  Tensor out(av.rows(), av.cols());
  K().add(av.data(), bv.data(), out.data(), out.size());
  return make_node(std::move(out), [aid = a.id, bid = b.id](Tape& t, std::uint32_t, const Tensor& g) {
    t.accumulate(aid, g);
    t.accumulate(bid, g);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  check_same_shape(av, bv, "sub");
  Tensor out(av.rows(), av.cols());
  K().sub(av.data(), bv.data(), out.data(), out.size());
  return make_node(std::move(out), [aid = a.id, bid = b.id](Tape& t, std::uint32_t, const Tensor& g) {
    t.accumulate(aid, g);
    K().axpy(-1.0, g.data(), t.grad_buf(bid).data(), g.size());
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = node_value(a.id);
  const Tensor& bv = node_value(b.id);
  check_same_shape(av, bv, "mul");
  Tensor out(av.rows(), av.cols());
  K().mul(av.data(), bv.data(), out.data(), out.size());
  return make_node(std::move(out), [aid = a.id, bid = b.id](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& aval = t.node_value(aid);
    const Tensor& bval = t.node_value(bid);
    double* da = t.grad_buf(aid).data();
    double* db = t.grad_buf(bid).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * bval[i];
      db[i] += g[i] * aval[i];
    }
  });
}

Var Tape::mul_const(Var a, Tensor factor) {
  const Tensor& av = node_value(a.id);
  check_same_shape(av, factor, "mul_const");
  Tensor out(av.rows(), av.cols());
  K().mul(av.data(), factor.data(), out.data(), out.size());
  auto fp = std::make_shared<Tensor>(std::move(factor));
  return make_node(std::move(out), [aid = a.id, fp](Tape& t, std::uint32_t, const Tensor& g) {
    double* da = t.grad_buf(aid).data();
    const Tensor& f = *fp;
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * f[i];
    }
  });
}

Var Tape::scale(Var a, double alpha) {
  const Tensor& av = node_value(a.id);
  Tensor out(av.rows(), av.cols());
  K().scale(av.data(), alpha, out.data(), out.size());
  return make_node(std::move(out), [aid = a.id, alpha](Tape& t, std::uint32_t, const Tensor& g) {
    K().axpy(alpha, g.data(), t.grad_buf(aid).data(), g.size());
  });
}

Var Tape::add_rowvec(Var a, Var row) {
  const Tensor& av = node_value(a.id);
  const Tensor& rv = node_value(row.id);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw NumericError("add_rowvec: " + av.shape_str() + " + " + rv.shape_str());
  }
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    K().add(av.row_ptr(r), rv.data(), out.row_ptr(r), av.cols());
  }
  return make_node(std::move(out),
                   [aid = a.id, rid = row.id](Tape& t, std::uint32_t, const Tensor& g) {
                     t.accumulate(aid, g);
                     double* dr = t.grad_buf(rid).data();
                     for (std::size_t r = 0; r < g.rows(); ++r) {
                       K().axpy(1.0, g.row_ptr(r), dr, g.cols());
                     }
                   });
}

Var Tape::tanh(Var a) {
  const Tensor& av = node_value(a.id);
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = std::tanh(av[i]);
  }
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t self, const Tensor& g) {
    const Tensor& y = t.node_value(self);
    double* da = t.grad_buf(aid).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var Tape::sigmoid(Var a) {
  const Tensor& av = node_value(a.id);
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = 1.0 - sigmoid_neg(av[i]);
  }
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t self, const Tensor& g) {
    const Tensor& y = t.node_value(self);
    double* da = t.grad_buf(aid).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var Tape::log_sigmoid(Var a) {
  const Tensor& av = node_value(a.id);
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  }
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t, const Tensor& g) {
    const Tensor& x = t.node_value(aid);
    double* da = t.grad_buf(aid).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * sigmoid_neg(x[i]);
    }
  });
}

Var Tape::softmax_rows(Var a) {
  Tensor out = node_value(a.id);
  softmax_rows_inplace(out);
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t self, const Tensor& g) {
    softmax_rows_backward(t.node_value(self), g, t.grad_buf(aid), 1.0);
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw NumericError("concat_cols: no inputs");
  }
  const std::size_t rows = node_value(parts[0].id).rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& pv = node_value(p.id);
    if (pv.rows() != rows) {
      throw NumericError("concat_cols: row mismatch " + node_value(parts[0].id).shape_str() +
                         " vs " + pv.shape_str());
    }
    total += pv.cols();
  }
  Tensor out(rows, total);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = node_value(p.id);
    for (std::size_t r = 0; r < rows; ++r) {
      std::memcpy(out.row_ptr(r) + off, pv.row_ptr(r), pv.cols() * sizeof(double));
    }
    ids.push_back(p.id);
    offsets.push_back(off);
    off += pv.cols();
  }
  return make_node(std::move(out), [ids = std::move(ids), offsets = std::move(offsets)](
                                       Tape& t, std::uint32_t, const Tensor& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Tensor& dp = t.grad_buf(ids[i]);
      for (std::size_t r = 0; r < dp.rows(); ++r) {
        K().axpy(1.0, g.row_ptr(r) + offsets[i], dp.row_ptr(r), dp.cols());
      }
    }
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw NumericError("concat_rows: no inputs");
  }
  const std::size_t cols = node_value(parts[0].id).cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& pv = node_value(p.id);
    if (pv.cols() != cols) {
      throw NumericError("concat_rows: column mismatch " + node_value(parts[0].id).shape_str() +
                         " vs " + pv.shape_str());
    }
    total += pv.rows();
  }
  Tensor out(total, cols);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = node_value(p.id);
    std::memcpy(out.row_ptr(off), pv.data(), pv.size() * sizeof(double));
    ids.push_back(p.id);
    offsets.push_back(off);
    off += pv.rows();
  }
  return make_node(std::move(out), [ids = std::move(ids), offsets = std::move(offsets)](
                                       Tape& t, std::uint32_t, const Tensor& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Tensor& dp = t.grad_buf(ids[i]);
      K().axpy(1.0, g.row_ptr(offsets[i]), dp.data(), dp.size());
    }
  });
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t width) {
  const Tensor& av = node_value(a.id);
  if (start + width > av.cols()) {
    throw NumericError("slice_cols: [" + std::to_string(start) + ", " +
                       std::to_string(start + width) + ") outside " + av.shape_str());
  }
  Tensor out(av.rows(), width);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::memcpy(out.row_ptr(r), av.row_ptr(r) + start, width * sizeof(double));
  }
  return make_node(std::move(out),
                   [aid = a.id, start, width](Tape& t, std::uint32_t, const Tensor& g) {
                     Tensor& da = t.grad_buf(aid);
                     for (std::size_t r = 0; r < g.rows(); ++r) {
                       K().axpy(1.0, g.row_ptr(r), da.row_ptr(r) + start, width);
                     }
                   });
}

Var Tape::stack_scalars(const std::vector<Var>& scalars) {
  if (scalars.empty()) {
    throw NumericError("stack_scalars: no inputs");
  }
  Tensor out(scalars.size(), 1);
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    out[i] = node_value(scalars[i].id).item();
    ids.push_back(scalars[i].id);
  }
  return make_node(std::move(out),
                   [ids = std::move(ids)](Tape& t, std::uint32_t, const Tensor& g) {
                     for (std::size_t i = 0; i < ids.size(); ++i) {
                       t.grad_buf(ids[i])[0] += g[i];
                     }
                   });
}

Var Tape::sum(Var a) {
  const Tensor& av = node_value(a.id);
  Tensor out = Tensor::scalar(K().sum(av.data(), av.size()));
  return make_node(std::move(out), [aid = a.id](Tape& t, std::uint32_t, const Tensor& g) {
    const double gv = g.item();
    double* da = t.grad_buf(aid).data();
    for (std::size_t i = 0; i < t.node_value(aid).size(); ++i) {
      da[i] += gv;
    }
  });
}

Var Tape::mean(Var a) {
  const Tensor& av = node_value(a.id);
  const double inv = 1.0 / static_cast<double>(av.size());
  Tensor out = Tensor::scalar(K().sum(av.data(), av.size()) * inv);
  return make_node(std::move(out), [aid = a.id, inv](Tape& t, std::uint32_t, const Tensor& g) {
    const double gv = g.item() * inv;
    double* da = t.grad_buf(aid).data();
    for (std::size_t i = 0; i < t.node_value(aid).size(); ++i) {
      da[i] += gv;
    }
  });
}

Var Tape::multi_head_mix(Var q, Var k, Var v, std::size_t heads, std::vector<Tensor>* attn_out) {
  const Tensor& qv = node_value(q.id);
  const Tensor& kv = node_value(k.id);
  const Tensor& vv = node_value(v.id);
  if (qv.cols() != kv.cols() || qv.cols() != vv.cols() || kv.rows() != vv.rows()) {
    throw NumericError("multi_head_mix: incompatible shapes " + qv.shape_str() + ", " +
                       kv.shape_str() + ", " + vv.shape_str());
  }
  if (heads == 0 || qv.cols() % heads != 0) {
    throw NumericError("multi_head_mix: width " + std::to_string(qv.cols()) +
                       " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t lq = qv.rows(), lc = kv.rows(), d = qv.cols() / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor out(lq, qv.cols());
  auto atts = std::make_shared<std::vector<Tensor>>();
  atts->reserve(heads);
  Tensor qh(lq, d), kh(lc, d), vh(lc, d), oh(lq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    pack_head(qv, h, d, qh);
    pack_head(kv, h, d, kh);
    pack_head(vv, h, d, vh);
    Tensor att(lq, lc);
    K().gemm_nt(qh.data(), kh.data(), att.data(), lq, d, lc, false);
    K().scale(att.data(), inv_sqrt_d, att.data(), att.size());
    softmax_rows_inplace(att);
    K().gemm_nn(att.data(), vh.data(), oh.data(), lq, lc, d, false);
    for (std::size_t r = 0; r < lq; ++r) {
      std::memcpy(out.row_ptr(r) + h * d, oh.row_ptr(r), d * sizeof(double));
    }
    atts->push_back(std::move(att));
  }
  if (attn_out != nullptr) {
    *attn_out = *atts;
  }

  return make_node(
      std::move(out), [qid = q.id, kid = k.id, vid = v.id, heads, d, inv_sqrt_d, atts](
                          Tape& t, std::uint32_t, const Tensor& g) {
        const Tensor& qval = t.node_value(qid);
        const Tensor& kval = t.node_value(kid);
        const Tensor& vval = t.node_value(vid);
        const std::size_t lq = qval.rows(), lc = kval.rows();
        Tensor qh(lq, d), kh(lc, d), vh(lc, d), gh(lq, d);
        Tensor da(lq, lc), ds(lq, lc), dqh(lq, d), dkh(lc, d), dvh(lc, d);
        for (std::size_t h = 0; h < heads; ++h) {
          pack_head(qval, h, d, qh);
          pack_head(kval, h, d, kh);
          pack_head(vval, h, d, vh);
          pack_head(g, h, d, gh);
          const Tensor& att = (*atts)[h];
          K().gemm_nt(gh.data(), vh.data(), da.data(), lq, d, lc, false);
          K().gemm_tn(att.data(), gh.data(), dvh.data(), lc, lq, d, false);
          ds.fill(0.0);
          softmax_rows_backward(att, da, ds, inv_sqrt_d);
          K().gemm_nn(ds.data(), kh.data(), dqh.data(), lq, lc, d, false);
          K().gemm_tn(ds.data(), qh.data(), dkh.data(), lc, lq, d, false);
          scatter_head(dqh, h, d, t.grad_buf(qid));
          scatter_head(dkh, h, d, t.grad_buf(kid));
          scatter_head(dvh, h, d, t.grad_buf(vid));
        }
      });
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) {
    throw NumericError("backward called on a forward-only tape");
  }
  if (backward_done_) {
    throw NumericError("backward may only run once per tape");
  }
  if (loss.tape != this) {
    throw NumericError("backward: loss belongs to a different tape");
  }
  const Tensor& lv = node_value(loss.id);
  if (lv.size() != 1) {
    throw NumericError("backward requires a scalar loss, got " + lv.shape_str());
  }
  if (!std::isfinite(lv.item())) {
    throw NumericError("backward: loss is not finite");
  }
  backward_done_ = true;

  grads_.assign(nodes_.size(), Tensor{});
  grad_buf(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!grads_[i].empty() && nodes_[i].backprop) {
      nodes_[i].backprop(*this, static_cast<std::uint32_t>(i), grads_[i]);
    }
  }
  for (auto& [p, nid] : param_order_) {
    if (!grads_[nid].empty()) {
      K().add(p->grad.data(), grads_[nid].data(), p->grad.data(), p->grad.size());
    }
  }
}

}  // namespace pprec::core
