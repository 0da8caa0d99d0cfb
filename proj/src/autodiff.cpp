#include "regunet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "regunet/errors.hpp"

namespace rgn {

namespace {

constexpr double kLayerNormEps = 1e-20;

void scatter_sum_rows(const Matrix& values,
                      const std::vector<std::uint32_t>& idx, Matrix& out) {
  out.set_zero();
  const std::size_t c = values.cols();
  for (std::size_t e = 0; e < values.rows(); ++e) {
    const double* src = values.row(e);
    double* dst = out.row(idx[e]);
    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
  }
}

void col_sum_into(const Matrix& m, Matrix& out) {
  const std::size_t c = m.cols();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* r = m.row(i);
    for (std::size_t j = 0; j < c; ++j) out.data()[j] += r[j];
  }
}

}  // namespace

void sorted_sum_rows(const Matrix& values, const RecvIndex& recv,
                     Matrix& out) {
  const std::size_t c = values.cols();
  std::vector<double> buf;
  for (std::size_t v = 0; v < recv.receivers(); ++v) {
    const std::uint32_t lo = recv.offsets[v], hi = recv.offsets[v + 1];
    double* dst = out.row(v);
    const std::size_t deg = hi - lo;
    if (deg == 0) {
      for (std::size_t j = 0; j < c; ++j) dst[j] = 0.0;
      continue;
    }
    buf.resize(deg);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::uint32_t k = lo; k < hi; ++k)
        buf[k - lo] = values(recv.edge_ids[k], j);
      std::sort(buf.begin(), buf.end());
      double s = 0.0;
      for (double x : buf) s += x;
      dst[j] = s;
    }
  }
}

Ref Tape::push(Node n) {
  activation_elements_ += n.value.size();
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size() - 1);
}

Matrix& Tape::grad_of(Ref r) {
  Node& n = nodes_[r];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Ref Tape::leaf(Matrix value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Ref Tape::linear(Ref x, std::size_t W, std::size_t b) {
  const Matrix& xv = nodes_[x].value;
  const Param& wp = params_->at(W);
  const Param& bp = params_->at(b);
  if (xv.cols() != wp.value.rows())
    throw InputError("linear: input width mismatch for " + wp.name);
  Node n;
  n.op = Op::kLinear;
  n.a = x;
  n.p0 = W;
  n.p1 = b;
  n.value = Matrix(xv.rows(), wp.value.cols());
  for (std::size_t i = 0; i < n.value.rows(); ++i)
    std::copy(bp.value.data(), bp.value.data() + n.value.cols(),
              n.value.row(i));
  gemm_nn(view_of(xv), view_of(wp.value), n.value, true);
  return push(std::move(n));
}

Ref Tape::linear_parts(std::vector<LinPart> parts, std::size_t W,
                       std::size_t b, std::size_t out_rows) {
  const Param& wp = params_->at(W);
  const Param& bp = params_->at(b);
  Node n;
  n.op = Op::kLinearParts;
  n.p0 = W;
  n.p1 = b;
  n.value = Matrix(out_rows, wp.value.cols());
  for (std::size_t i = 0; i < out_rows; ++i)
    std::copy(bp.value.data(), bp.value.data() + n.value.cols(),
              n.value.row(i));
  std::size_t covered = 0;
  for (const LinPart& part : parts) {
    const Matrix& src = nodes_[part.src].value;
    covered += src.cols();
    const ConstMatView wslice = row_slice(wp.value, part.w_begin, src.cols());
    if (part.gather == nullptr) {
      if (src.rows() != out_rows)
        throw InputError("linear_parts: aligned part row mismatch");
      gemm_nn(view_of(src), wslice, n.value, true);
    } else {
      Matrix proj(src.rows(), wp.value.cols());
      gemm_nn(view_of(src), wslice, proj, false);
      const auto& idx = *part.gather;
      if (idx.size() != out_rows)
        throw InputError("linear_parts: gather length mismatch");
      for (std::size_t r = 0; r < out_rows; ++r) {
        const double* p = proj.row(idx[r]);
        double* dst = n.value.row(r);
        for (std::size_t j = 0; j < n.value.cols(); ++j) dst[j] += p[j];
      }
    }
  }
  if (covered != wp.value.rows())
    throw InputError("linear_parts: parts do not cover weight rows of " +
                     wp.name);
  n.parts = std::move(parts);
  return push(std::move(n));
}

Ref Tape::relu(Ref x) {
  const Matrix& xv = nodes_[x].value;
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.value = Matrix(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i)
    n.value.data()[i] = xv.data()[i] > 0.0 ? xv.data()[i] : 0.0;
  return push(std::move(n));
}

Ref Tape::leaky_relu(Ref x, double alpha) {
  const Matrix& xv = nodes_[x].value;
  Node n;
  n.op = Op::kLeakyRelu;
  n.a = x;
  n.c0 = alpha;
  n.value = Matrix(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv.data()[i];
    n.value.data()[i] = v > 0.0 ? v : alpha * v;
  }
  return push(std::move(n));
}

Ref Tape::layer_norm(Ref x, std::size_t gamma, std::size_t beta) {
  const Matrix& xv = nodes_[x].value;
  const Param& gp = params_->at(gamma);
  const Param& bp = params_->at(beta);
  const std::size_t c = xv.cols();
  if (gp.value.size() != c || bp.value.size() != c)
    throw InputError("layer_norm: parameter width mismatch");
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x;
  n.p0 = gamma;
  n.p1 = beta;
  n.value = Matrix(xv.rows(), c);
  n.aux = Matrix(xv.rows(), c);   // normalized rows
  n.aux2 = Matrix(xv.rows(), 1);  // inverse stddev
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const double* r = xv.row(i);
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += r[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = r[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    n.aux2(i, 0) = inv;
    double* xh = n.aux.row(i);
    double* y = n.value.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      xh[j] = (r[j] - mean) * inv;
      y[j] = xh[j] * gp.value.data()[j] + bp.value.data()[j];
    }
  }
  return push(std::move(n));
}

Ref Tape::add(Ref x, Ref y) {
  const Matrix& xv = nodes_[x].value;
  const Matrix& yv = nodes_[y].value;
  if (!xv.same_shape(yv)) throw InputError("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = x;
  n.b = y;
  n.value = Matrix(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i)
    n.value.data()[i] = xv.data()[i] + yv.data()[i];
  return push(std::move(n));
}

Ref Tape::aggregate_sorted(Ref edge_values, const RecvIndex* recv) {
  const Matrix& ev = nodes_[edge_values].value;
  Node n;
  n.op = Op::kAggregateSorted;
  n.a = edge_values;
  n.recv = recv;
  n.value = Matrix(recv->receivers(), ev.cols());
  sorted_sum_rows(ev, *recv, n.value);
  return push(std::move(n));
}

Ref Tape::nw_aggregate(Ref x, const std::vector<std::uint32_t>* senders,
                       const RecvIndex* recv, std::size_t W, std::size_t cin,
                       std::size_t cout) {
  const Matrix& xv = nodes_[x].value;
  const Param& wp = params_->at(W);
  const std::size_t ne = senders->size();
  if (xv.cols() != cin) throw InputError("nw_aggregate: input width mismatch");
  if (wp.value.rows() != ne || wp.value.cols() != cin * cout)
    throw InputError("nw_aggregate: weight bank shape mismatch for " +
                     wp.name);
  Matrix messages(ne, cout);
  for (std::size_t e = 0; e < ne; ++e) {
    const double* xr = xv.row((*senders)[e]);
    const double* we = wp.value.row(e);
    double* msg = messages.row(e);
    for (std::size_t co = 0; co < cout; ++co) msg[co] = 0.0;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double a = xr[ci];
      const double* wrow = we + ci * cout;
      for (std::size_t co = 0; co < cout; ++co)
        msg[co] = std::fma(a, wrow[co], msg[co]);
    }
  }
  Node n;
  n.op = Op::kNwAggregate;
  n.a = x;
  n.p0 = W;
  n.idx = senders;
  n.recv = recv;
  n.c0 = static_cast<double>(cin);
  n.value = Matrix(recv->receivers(), cout);
  sorted_sum_rows(messages, *recv, n.value);
  return push(std::move(n));
}

Ref Tape::masked_sse(Ref x, const Matrix* target,
                     const std::vector<std::uint8_t>* mask) {
  const Matrix& xv = nodes_[x].value;
  if (!xv.same_shape(*target)) throw InputError("masked_sse: shape mismatch");
  if (mask->size() != xv.rows())
    throw InputError("masked_sse: mask length mismatch");
  Node n;
  n.op = Op::kMaskedSse;
  n.a = x;
  n.target = target;
  n.mask = mask;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    if (!(*mask)[i]) continue;
    const double* p = xv.row(i);
    const double* t = target->row(i);
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      const double d = p[j] - t[j];
      s += d * d;
    }
  }
  n.value(0, 0) = s;
  return push(std::move(n));
}

Ref Tape::zero_rows(Ref x, const std::vector<std::uint8_t>* mask) {
  const Matrix& xv = nodes_[x].value;
  if (mask->size() != xv.rows())
    throw InputError("zero_rows: mask length mismatch");
  Node n;
  n.op = Op::kZeroRows;
  n.a = x;
  n.mask = mask;
  n.value = xv;
  for (std::size_t i = 0; i < xv.rows(); ++i)
    if ((*mask)[i])
      std::memset(n.value.row(i), 0, xv.cols() * sizeof(double));
  return push(std::move(n));
}

Ref Tape::scalar_weighted_sum(const std::vector<Ref>& scalars, double coeff) {
  Node n;
  n.op = Op::kScalarWeightedSum;
  n.srcs = scalars;
  n.c0 = coeff;
  n.value = Matrix(1, 1);
  double s = 0.0;
  for (Ref r : scalars) s += nodes_[r].value(0, 0);
  n.value(0, 0) = coeff * s;
  return push(std::move(n));
}

void Tape::backward(Ref scalar_root) {
  if (nodes_[scalar_root].value.size() != 1)
    throw InputError("backward: root is not a scalar");
  grad_of(scalar_root)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad.empty()) backward_node(n);
    n.value.release();
    n.grad.release();
    n.aux.release();
    n.aux2.release();
  }
}

void Tape::backward_node(Node& n) {
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kLinear: {
      Param& wp = params_->at(n.p0);
      Param& bp = params_->at(n.p1);
      const Matrix& xv = nodes_[n.a].value;
      gemm_tn(xv, g, wp.grad, true);
      col_sum_into(g, bp.grad);
      Matrix wt = transposed(wp.value);
      gemm_nn(view_of(g), view_of(wt), grad_of(n.a), true);
      break;
    }
    case Op::kLinearParts: {
      Param& wp = params_->at(n.p0);
      Param& bp = params_->at(n.p1);
      col_sum_into(g, bp.grad);
      for (const LinPart& part : n.parts) {
        const Matrix& src = nodes_[part.src].value;
        Matrix& sgrad = grad_of(part.src);
        const ConstMatView wslice =
            row_slice(wp.value, part.w_begin, src.cols());
        Matrix wt = transposed(wslice);
        // Gradient rows for this part's weight slice live at the same
        // offset inside the full weight gradient.
        if (part.gather == nullptr) {
          Matrix dw(src.cols(), wp.value.cols());
          gemm_tn(src, g, dw, false);
          for (std::size_t r = 0; r < dw.rows(); ++r) {
            double* dst = wp.grad.row(part.w_begin + r);
            const double* sp = dw.row(r);
            for (std::size_t j = 0; j < dw.cols(); ++j) dst[j] += sp[j];
          }
          gemm_nn(view_of(g), view_of(wt), sgrad, true);
        } else {
          Matrix scat(src.rows(), g.cols());
          scatter_sum_rows(g, *part.gather, scat);
          Matrix dw(src.cols(), wp.value.cols());
          gemm_tn(src, scat, dw, false);
          for (std::size_t r = 0; r < dw.rows(); ++r) {
            double* dst = wp.grad.row(part.w_begin + r);
            const double* sp = dw.row(r);
            for (std::size_t j = 0; j < dw.cols(); ++j) dst[j] += sp[j];
          }
          gemm_nn(view_of(scat), view_of(wt), sgrad, true);
        }
      }
      break;
    }
    case Op::kRelu: {
      const Matrix& xv = nodes_[n.a].value;
      Matrix& xg = grad_of(n.a);
      for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv.data()[i] > 0.0) xg.data()[i] += g.data()[i];
      break;
    }
    case Op::kLeakyRelu: {
      const Matrix& xv = nodes_[n.a].value;
      Matrix& xg = grad_of(n.a);
      for (std::size_t i = 0; i < xv.size(); ++i)
        xg.data()[i] +=
            g.data()[i] * (xv.data()[i] > 0.0 ? 1.0 : n.c0);
      break;
    }
    case Op::kLayerNorm: {
      Param& gp = params_->at(n.p0);
      Param& bp = params_->at(n.p1);
      Matrix& xg = grad_of(n.a);
      const std::size_t c = n.value.cols();
      for (std::size_t i = 0; i < n.value.rows(); ++i) {
        const double* gr = g.row(i);
        const double* xh = n.aux.row(i);
        const double inv = n.aux2(i, 0);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double gj = gr[j] * gp.value.data()[j];
          m1 += gj;
          m2 += gj * xh[j];
          gp.grad.data()[j] += gr[j] * xh[j];
          bp.grad.data()[j] += gr[j];
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        double* xgr = xg.row(i);
        for (std::size_t j = 0; j < c; ++j) {
          const double gj = gr[j] * gp.value.data()[j];
          xgr[j] += inv * (gj - m1 - xh[j] * m2);
        }
      }
      break;
    }
    case Op::kAdd: {
      Matrix& ga = grad_of(n.a);
      Matrix& gb = grad_of(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.data()[i] += g.data()[i];
        gb.data()[i] += g.data()[i];
      }
      break;
    }
    case Op::kAggregateSorted: {
      Matrix& xg = grad_of(n.a);
      const RecvIndex& recv = *n.recv;
      for (std::size_t v = 0; v < recv.receivers(); ++v) {
        const double* gr = g.row(v);
        for (std::uint32_t k = recv.offsets[v]; k < recv.offsets[v + 1];
             ++k) {
          double* er = xg.row(recv.edge_ids[k]);
          for (std::size_t j = 0; j < g.cols(); ++j) er[j] += gr[j];
        }
      }
      break;
    }
    case Op::kNwAggregate: {
      Param& wp = params_->at(n.p0);
      const Matrix& xv = nodes_[n.a].value;
      Matrix& xg = grad_of(n.a);
      const std::size_t cin = static_cast<std::size_t>(n.c0);
      const std::size_t cout = g.cols();
      // Message gradient for edge e is the receiver's aggregate gradient.
      std::vector<std::uint32_t> recv_of(n.idx->size());
      const RecvIndex& recv = *n.recv;
      for (std::size_t v = 0; v < recv.receivers(); ++v)
        for (std::uint32_t k = recv.offsets[v]; k < recv.offsets[v + 1]; ++k)
          recv_of[recv.edge_ids[k]] = static_cast<std::uint32_t>(v);
      for (std::size_t e = 0; e < n.idx->size(); ++e) {
        const double* dmsg = g.row(recv_of[e]);
        const double* xr = xv.row((*n.idx)[e]);
        double* xgr = xg.row((*n.idx)[e]);
        const double* we = wp.value.row(e);
        double* dwe = wp.grad.row(e);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double a = xr[ci];
          const double* wrow = we + ci * cout;
          double* dwrow = dwe + ci * cout;
          double acc = 0.0;
          for (std::size_t co = 0; co < cout; ++co) {
            dwrow[co] += a * dmsg[co];
            acc += wrow[co] * dmsg[co];
          }
          xgr[ci] += acc;
        }
      }
      break;
    }
    case Op::kMaskedSse: {
      const Matrix& xv = nodes_[n.a].value;
      Matrix& xg = grad_of(n.a);
      const double s = g(0, 0);
      for (std::size_t i = 0; i < xv.rows(); ++i) {
        if (!(*n.mask)[i]) continue;
        const double* p = xv.row(i);
        const double* t = n.target->row(i);
        double* xgr = xg.row(i);
        for (std::size_t j = 0; j < xv.cols(); ++j)
          xgr[j] += 2.0 * s * (p[j] - t[j]);
      }
      break;
    }
    case Op::kZeroRows: {
      Matrix& xg = grad_of(n.a);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        if ((*n.mask)[i]) continue;
        const double* gr = g.row(i);
        double* xgr = xg.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) xgr[j] += gr[j];
      }
      break;
    }
    case Op::kScalarWeightedSum: {
      const double s = g(0, 0) * n.c0;
      for (Ref r : n.srcs) grad_of(r)(0, 0) += s;
      break;
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  activation_elements_ = 0;
}

}  // namespace rgn
