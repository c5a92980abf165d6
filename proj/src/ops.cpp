#include "pdlab/ops.hpp"

#include <cmath>
#include <utility>

namespace pdlab {

namespace {

Tensor make_result(Shape shape, ArrayX value, std::vector<NodePtr> parents, BackpropFn fn) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    if (req) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backprop = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() > 2) {
    throw TensorError(std::string(op) + ": rank-" + std::to_string(t.rank()) +
                      " tensor " + shape_str(t.shape()) + " is not a matrix");
  }
}

ConstMapRM as_mat(const ArrayX& a, Index rows, Index cols) {
  return ConstMapRM(a.data(), rows, cols);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto pa = a.node(), pb = b.node();
  if (a.shape() == b.shape()) {
    return make_result(a.shape(), pa->value + pb->value, {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         sink.push(pb, up);
                       });
  }
  if (b.size() == 1) {
    return make_result(a.shape(), pa->value + pb->value(0), {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         ArrayX s(1);
                         s(0) = up.sum();
                         sink.push(pb, std::move(s));
                       });
  }
  if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.cols()) {
    const Index r = a.rows(), c = a.cols();
    ArrayX out(a.size());
    MapRM(out.data(), r, c) = (a.mat().array().rowwise() + pb->value.transpose()).matrix();
    return make_result(a.shape(), std::move(out), {pa, pb},
                       [pa, pb, r, c](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         ArrayX db = as_mat(up, r, c).colwise().sum().transpose().array();
                         sink.push(pb, std::move(db));
                       });
  }
  throw_shape_error("add", a.shape(), b.shape());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto pa = a.node(), pb = b.node();
  if (a.shape() == b.shape()) {
    return make_result(a.shape(), pa->value - pb->value, {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         sink.push(pb, -up);
                       });
  }
  if (b.size() == 1) {
    return make_result(a.shape(), pa->value - pb->value(0), {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         ArrayX s(1);
                         s(0) = -up.sum();
                         sink.push(pb, std::move(s));
                       });
  }
  if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.cols()) {
    const Index r = a.rows(), c = a.cols();
    ArrayX out(a.size());
    MapRM(out.data(), r, c) = (a.mat().array().rowwise() - pb->value.transpose()).matrix();
    return make_result(a.shape(), std::move(out), {pa, pb},
                       [pa, pb, r, c](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up);
                         ArrayX db = -as_mat(up, r, c).colwise().sum().transpose().array();
                         sink.push(pb, std::move(db));
                       });
  }
  throw_shape_error("sub", a.shape(), b.shape());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto pa = a.node(), pb = b.node();
  if (a.shape() == b.shape()) {
    return make_result(a.shape(), pa->value * pb->value, {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up * pb->value);
                         sink.push(pb, up * pa->value);
                       });
  }
  if (b.size() == 1) {
    return make_result(a.shape(), pa->value * pb->value(0), {pa, pb},
                       [pa, pb](const ArrayX& up, GradFlow& sink) {
                         sink.push(pa, up * pb->value(0));
                         ArrayX s(1);
                         s(0) = (up * pa->value).sum();
                         sink.push(pb, std::move(s));
                       });
  }
  throw_shape_error("mul", a.shape(), b.shape());
}

Tensor scale(const Tensor& a, double c) {
  auto pa = a.node();
  return make_result(a.shape(), pa->value * c, {pa},
                     [pa, c](const ArrayX& up, GradFlow& sink) { sink.push(pa, up * c); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw_shape_error("matmul", a.shape(), b.shape());
  }
  auto pa = a.node(), pb = b.node();
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  ArrayX out(m * n);
  MapRM(out.data(), m, n).noalias() = a.mat() * b.mat();
  return make_result({m, n}, std::move(out), {pa, pb},
                     [pa, pb, m, k, n](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), m, n);
                       ConstMapRM A(pa->value.data(), m, k);
                       ConstMapRM B(pb->value.data(), k, n);
                       if (pa->requires_grad) {
                         ArrayX da(m * k);
                         MapRM(da.data(), m, k).noalias() = U * B.transpose();
                         sink.push(pa, std::move(da));
                       }
                       if (pb->requires_grad) {
                         ArrayX db(k * n);
                         MapRM(db.data(), k, n).noalias() = A.transpose() * U;
                         sink.push(pb, std::move(db));
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  auto pa = a.node();
  const Index m = a.rows(), n = a.cols();
  ArrayX out(m * n);
  MapRM(out.data(), n, m) = a.mat().transpose();
  return make_result({n, m}, std::move(out), {pa},
                     [pa, m, n](const ArrayX& up, GradFlow& sink) {
                       ArrayX da(m * n);
                       MapRM(da.data(), m, n) = as_mat(up, n, m).transpose();
                       sink.push(pa, std::move(da));
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_rows: no parts");
  const Index c = parts.front().cols();
  Index total = 0;
  std::vector<NodePtr> nodes;
  std::vector<Index> row_counts;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (p.cols() != c) throw_shape_error("concat_rows", parts.front().shape(), p.shape());
    nodes.push_back(p.node());
    row_counts.push_back(p.rows());
    total += p.rows();
  }
  ArrayX out(total * c);
  Index r0 = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    MapRM(out.data(), total, c).middleRows(r0, row_counts[i]) =
        as_mat(nodes[i]->value, row_counts[i], c);
    r0 += row_counts[i];
  }
  return make_result({total, c}, std::move(out), nodes,
                     [nodes, row_counts, total, c](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), total, c);
                       Index r = 0;
                       for (size_t i = 0; i < nodes.size(); ++i) {
                         if (nodes[i]->requires_grad) {
                           ArrayX g(row_counts[i] * c);
                           MapRM(g.data(), row_counts[i], c) = U.middleRows(r, row_counts[i]);
                           sink.push(nodes[i], std::move(g));
                         }
                         r += row_counts[i];
                       }
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: no parts");
  const Index r = parts.front().rows();
  Index total = 0;
  std::vector<NodePtr> nodes;
  std::vector<Index> col_counts;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.rows() != r) throw_shape_error("concat_cols", parts.front().shape(), p.shape());
    nodes.push_back(p.node());
    col_counts.push_back(p.cols());
    total += p.cols();
  }
  ArrayX out(r * total);
  Index c0 = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    MapRM(out.data(), r, total).middleCols(c0, col_counts[i]) =
        as_mat(nodes[i]->value, r, col_counts[i]);
    c0 += col_counts[i];
  }
  return make_result({r, total}, std::move(out), nodes,
                     [nodes, col_counts, r, total](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), r, total);
                       Index c = 0;
                       for (size_t i = 0; i < nodes.size(); ++i) {
                         if (nodes[i]->requires_grad) {
                           ArrayX g(r * col_counts[i]);
                           MapRM(g.data(), r, col_counts[i]) = U.middleCols(c, col_counts[i]);
                           sink.push(nodes[i], std::move(g));
                         }
                         c += col_counts[i];
                       }
                     });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  require_matrix("slice_rows", a);
  const Index m = a.rows(), n = a.cols();
  if (start < 0 || count < 0 || start + count > m) {
    throw TensorError("slice_rows: range [" + std::to_string(start) + ", " +
                      std::to_string(start + count) + ") out of bounds for shape " +
                      shape_str(a.shape()));
  }
  auto pa = a.node();
  ArrayX out(count * n);
  MapRM(out.data(), count, n) = a.mat().middleRows(start, count);
  return make_result({count, n}, std::move(out), {pa},
                     [pa, start, count, m, n](const ArrayX& up, GradFlow& sink) {
                       ArrayX da = ArrayX::Zero(m * n);
                       MapRM(da.data(), m, n).middleRows(start, count) = as_mat(up, count, n);
                       sink.push(pa, std::move(da));
                     });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  require_matrix("slice_cols", a);
  const Index m = a.rows(), n = a.cols();
  if (start < 0 || count < 0 || start + count > n) {
    throw TensorError("slice_cols: range [" + std::to_string(start) + ", " +
                      std::to_string(start + count) + ") out of bounds for shape " +
                      shape_str(a.shape()));
  }
  auto pa = a.node();
  ArrayX out(m * count);
  MapRM(out.data(), m, count) = a.mat().middleCols(start, count);
  return make_result({m, count}, std::move(out), {pa},
                     [pa, start, count, m, n](const ArrayX& up, GradFlow& sink) {
                       ArrayX da = ArrayX::Zero(m * n);
                       MapRM(da.data(), m, n).middleCols(start, count) = as_mat(up, m, count);
                       sink.push(pa, std::move(da));
                     });
}

Tensor insert_rows(const Tensor& a, const Tensor& block, Index at) {
  require_matrix("insert_rows", a);
  require_matrix("insert_rows", block);
  if (a.cols() != block.cols()) throw_shape_error("insert_rows", a.shape(), block.shape());
  if (at < 0 || at > a.rows()) {
    throw TensorError("insert_rows: index " + std::to_string(at) + " out of bounds for shape " +
                      shape_str(a.shape()));
  }
  const Index ma = a.rows(), mb = block.rows(), n = a.cols();
  auto pa = a.node(), pb = block.node();
  ArrayX out((ma + mb) * n);
  MapRM O(out.data(), ma + mb, n);
  O.topRows(at) = a.mat().topRows(at);
  O.middleRows(at, mb) = block.mat();
  O.bottomRows(ma - at) = a.mat().bottomRows(ma - at);
  return make_result({ma + mb, n}, std::move(out), {pa, pb},
                     [pa, pb, at, ma, mb, n](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), ma + mb, n);
                       if (pa->requires_grad) {
                         ArrayX da(ma * n);
                         MapRM D(da.data(), ma, n);
                         D.topRows(at) = U.topRows(at);
                         D.bottomRows(ma - at) = U.bottomRows(ma - at);
                         sink.push(pa, std::move(da));
                       }
                       if (pb->requires_grad) {
                         ArrayX db(mb * n);
                         MapRM(db.data(), mb, n) = U.middleRows(at, mb);
                         sink.push(pb, std::move(db));
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) throw_shape_error("reshape", a.shape(), shape);
  auto pa = a.node();
  return make_result(std::move(shape), pa->value, {pa},
                     [pa](const ArrayX& up, GradFlow& sink) { sink.push(pa, up); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix("layer_norm", x);
  if (gamma.rank() != 1 || gamma.cols() != x.cols()) {
    throw_shape_error("layer_norm", x.shape(), gamma.shape());
  }
  if (beta.rank() != 1 || beta.cols() != x.cols()) {
    throw_shape_error("layer_norm", x.shape(), beta.shape());
  }
  const Index m = x.rows(), n = x.cols();
  auto px = x.node(), pg = gamma.node(), pb = beta.node();

  auto xhat = std::make_shared<ArrayX>(x.size());
  auto inv_std = std::make_shared<ArrayX>(m);
  ArrayX out(x.size());
  ConstMapRM X(px->value.data(), m, n);
  MapRM H(xhat->data(), m, n);
  MapRM Y(out.data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = inv;
    H.row(i) = ((X.row(i).array() - mu) * inv).matrix();
    Y.row(i) = (H.row(i).array() * pg->value.transpose() + pb->value.transpose()).matrix();
  }
  return make_result(
      x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, xhat, inv_std, m, n](const ArrayX& up, GradFlow& sink) {
        ConstMapRM U(up.data(), m, n);
        ConstMapRM H(xhat->data(), m, n);
        if (pb->requires_grad) {
          ArrayX db = U.colwise().sum().transpose().array();
          sink.push(pb, std::move(db));
        }
        if (pg->requires_grad) {
          ArrayX dg = (U.array() * H.array()).colwise().sum().transpose();
          sink.push(pg, std::move(dg));
        }
        if (px->requires_grad) {
          ArrayX dx(m * n);
          MapRM D(dx.data(), m, n);
          for (Index i = 0; i < m; ++i) {
            Eigen::ArrayXd dh = U.row(i).transpose().array() * pg->value;
            const double mean_dh = dh.mean();
            const double mean_dh_h = (dh * H.row(i).transpose().array()).mean();
            D.row(i) = ((dh - mean_dh - H.row(i).transpose().array() * mean_dh_h) *
                        (*inv_std)(i)).matrix().transpose();
          }
          sink.push(px, std::move(dx));
        }
      });
}

namespace {

// Standard normal CDF, the exact (erf-based) form.
inline double norm_cdf(double t) { return 0.5 * (1.0 + std::erf(t / std::sqrt(2.0))); }

}  // namespace

Tensor gelu(const Tensor& x) {
  auto px = x.node();
  ArrayX out = px->value * px->value.unaryExpr([](double t) { return norm_cdf(t); });
  return make_result(x.shape(), std::move(out), {px},
                     [px](const ArrayX& up, GradFlow& sink) {
                       const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
                       const ArrayX& v = px->value;
                       ArrayX phi = (-0.5 * v.square()).exp() * inv_sqrt2pi;
                       ArrayX cdf = v.unaryExpr([](double t) { return norm_cdf(t); });
                       sink.push(px, up * (cdf + v * phi));
                     });
}

namespace {

// Shared softmax/log_softmax kernel over rows; axis 0 works on the transpose.
ArrayX softmax_rows_value(ConstMapRM X, bool log_form) {
  const Index m = X.rows(), n = X.cols();
  ArrayX out(m * n);
  MapRM Y(out.data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double mx = X.row(i).maxCoeff();
    Eigen::ArrayXd e = (X.row(i).transpose().array() - mx).exp();
    const double z = e.sum();
    if (log_form) {
      Y.row(i) = (X.row(i).array() - mx - std::log(z)).matrix();
    } else {
      Y.row(i) = (e / z).matrix().transpose();
    }
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require_matrix("softmax", x);
  if (axis != 0 && axis != 1) throw TensorError("softmax: axis must be 0 or 1");
  const Index m = x.rows(), n = x.cols();
  auto px = x.node();
  ArrayX out;
  if (axis == 1) {
    out = softmax_rows_value(x.mat(), false);
  } else {
    MatRM xt = x.mat().transpose();
    ArrayX t = softmax_rows_value(ConstMapRM(xt.data(), n, m), false);
    out.resize(m * n);
    MapRM(out.data(), m, n) = as_mat(t, n, m).transpose();
  }
  auto y = std::make_shared<ArrayX>(out);
  return make_result(x.shape(), std::move(out), {px},
                     [px, y, m, n, axis](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), m, n);
                       ConstMapRM Y(y->data(), m, n);
                       ArrayX dx(m * n);
                       MapRM D(dx.data(), m, n);
                       if (axis == 1) {
                         for (Index i = 0; i < m; ++i) {
                           const double dot = (U.row(i).array() * Y.row(i).array()).sum();
                           D.row(i) = (Y.row(i).array() * (U.row(i).array() - dot)).matrix();
                         }
                       } else {
                         for (Index j = 0; j < n; ++j) {
                           const double dot = (U.col(j).array() * Y.col(j).array()).sum();
                           D.col(j) = (Y.col(j).array() * (U.col(j).array() - dot)).matrix();
                         }
                       }
                       sink.push(px, std::move(dx));
                     });
}

Tensor log_softmax(const Tensor& x, int axis) {
  require_matrix("log_softmax", x);
  if (axis != 0 && axis != 1) throw TensorError("log_softmax: axis must be 0 or 1");
  const Index m = x.rows(), n = x.cols();
  auto px = x.node();
  ArrayX out;
  if (axis == 1) {
    out = softmax_rows_value(x.mat(), true);
  } else {
    MatRM xt = x.mat().transpose();
    ArrayX t = softmax_rows_value(ConstMapRM(xt.data(), n, m), true);
    out.resize(m * n);
    MapRM(out.data(), m, n) = as_mat(t, n, m).transpose();
  }
  auto p = std::make_shared<ArrayX>(out.exp());
  return make_result(x.shape(), std::move(out), {px},
                     [px, p, m, n, axis](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), m, n);
                       ConstMapRM P(p->data(), m, n);
                       ArrayX dx(m * n);
                       MapRM D(dx.data(), m, n);
                       if (axis == 1) {
                         for (Index i = 0; i < m; ++i) {
                           const double s = U.row(i).sum();
                           D.row(i) = (U.row(i).array() - P.row(i).array() * s).matrix();
                         }
                       } else {
                         for (Index j = 0; j < n; ++j) {
                           const double s = U.col(j).sum();
                           D.col(j) = (U.col(j).array() - P.col(j).array() * s).matrix();
                         }
                       }
                       sink.push(px, std::move(dx));
                     });
}

Tensor log(const Tensor& x) {
  auto px = x.node();
  return make_result(x.shape(), px->value.log(), {px},
                     [px](const ArrayX& up, GradFlow& sink) { sink.push(px, up / px->value); });
}

Tensor exp(const Tensor& x) {
  auto px = x.node();
  ArrayX out = px->value.exp();
  auto y = std::make_shared<ArrayX>(out);
  return make_result(x.shape(), std::move(out), {px},
                     [px, y](const ArrayX& up, GradFlow& sink) { sink.push(px, up * (*y)); });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  require_matrix("normalize_rows", x);
  const Index m = x.rows(), n = x.cols();
  auto px = x.node();
  auto norms = std::make_shared<ArrayX>(m);
  ArrayX out(x.size());
  ConstMapRM X(px->value.data(), m, n);
  MapRM Y(out.data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double r = std::max(X.row(i).norm(), eps);
    (*norms)(i) = r;
    Y.row(i) = X.row(i) / r;
  }
  auto y = std::make_shared<ArrayX>(out);
  return make_result(x.shape(), std::move(out), {px},
                     [px, y, norms, m, n](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), m, n);
                       ConstMapRM Y(y->data(), m, n);
                       ArrayX dx(m * n);
                       MapRM D(dx.data(), m, n);
                       for (Index i = 0; i < m; ++i) {
                         const double dot = (U.row(i).array() * Y.row(i).array()).sum();
                         D.row(i) =
                             ((U.row(i).array() - Y.row(i).array() * dot) / (*norms)(i)).matrix();
                       }
                       sink.push(px, std::move(dx));
                     });
}

Tensor sum(const Tensor& x) {
  auto px = x.node();
  ArrayX out(1);
  out(0) = px->value.sum();
  return make_result({}, std::move(out), {px},
                     [px](const ArrayX& up, GradFlow& sink) {
                       sink.push(px, ArrayX::Constant(px->value.size(), up(0)));
                     });
}

Tensor mean(const Tensor& x) {
  auto px = x.node();
  const double n = static_cast<double>(px->value.size());
  ArrayX out(1);
  out(0) = px->value.sum() / n;
  return make_result({}, std::move(out), {px},
                     [px, n](const ArrayX& up, GradFlow& sink) {
                       sink.push(px, ArrayX::Constant(px->value.size(), up(0) / n));
                     });
}

Tensor sum_axis(const Tensor& x, int axis) {
  require_matrix("sum_axis", x);
  if (axis != 0 && axis != 1) throw TensorError("sum_axis: axis must be 0 or 1");
  const Index m = x.rows(), n = x.cols();
  auto px = x.node();
  if (axis == 1) {
    ArrayX out = x.mat().rowwise().sum().array();
    return make_result({m}, std::move(out), {px},
                       [px, m, n](const ArrayX& up, GradFlow& sink) {
                         ArrayX dx(m * n);
                         MapRM(dx.data(), m, n).colwise() = up.matrix();
                         sink.push(px, std::move(dx));
                       });
  }
  ArrayX out = x.mat().colwise().sum().transpose().array();
  return make_result({n}, std::move(out), {px},
                     [px, m, n](const ArrayX& up, GradFlow& sink) {
                       ArrayX dx(m * n);
                       MapRM(dx.data(), m, n).rowwise() = up.matrix().transpose();
                       sink.push(px, std::move(dx));
                     });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw_shape_error("cosine_similarity", a.shape(), b.shape());
  Tensor an = normalize_rows(a);
  Tensor bn = normalize_rows(b);
  if (a.rank() <= 1) return sum(mul(an, bn));
  return sum_axis(mul(an, bn), 1);
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw TensorError("dropout: probability " + std::to_string(p) + " outside [0, 1)");
  }
  if (!train || p == 0.0) return x;
  auto px = x.node();
  const double keep = 1.0 - p;
  auto mask = std::make_shared<ArrayX>(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < x.size(); ++i) (*mask)(i) = u(rng) < keep ? 1.0 / keep : 0.0;
  return make_result(x.shape(), px->value * (*mask), {px},
                     [px, mask](const ArrayX& up, GradFlow& sink) {
                       sink.push(px, up * (*mask));
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw TensorError("embedding: table of shape " + shape_str(table.shape()) +
                      " is not a matrix");
  }
  const Index v = table.rows(), d = table.cols();
  auto pt = table.node();
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || id >= v) {
      throw TensorError("embedding: id " + std::to_string(id) + " outside table of " +
                        std::to_string(v) + " rows");
    }
  }
  const Index m = static_cast<Index>(idx.size());
  ArrayX out(m * d);
  MapRM O(out.data(), m, d);
  for (Index i = 0; i < m; ++i) O.row(i) = table.mat().row(idx[i]);
  return make_result({m, d}, std::move(out), {pt},
                     [pt, idx, v, d, m](const ArrayX& up, GradFlow& sink) {
                       ConstMapRM U(up.data(), m, d);
                       ArrayX dt = ArrayX::Zero(v * d);
                       MapRM D(dt.data(), v, d);
                       for (Index i = 0; i < m; ++i) D.row(idx[i]) += U.row(i);
                       sink.push(pt, std::move(dt));
                     });
}

}  // namespace pdlab
