#include "promptmerge/graph.hpp"

#include "promptmerge/errors.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace pm {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

} // namespace

Var Graph::constant(Matrix value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::variable(Matrix value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
    Node n;
    n.view = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_ && p.trainable;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::emit(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
        for (const Var& p : parents) {
            if (p.valid() && node(p).requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Graph::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value().rows(), n.value().cols());
    return n.grad;
}

void Graph::backward(const Var& loss) {
    if (loss.graph_ != this) throw PreconditionError("backward: variable from another graph");
    Node& root = nodes_[static_cast<std::size_t>(loss.id_)];
    if (root.value().size() != 1) throw ShapeError("backward: loss must be 1x1");
    if (!root.requires_grad) return;
    root.grad = Matrix::Ones(1, 1);
    for (int id = loss.id_; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            if (n.param->grad.size() == 0)
                n.param->grad = n.grad;
            else
                n.param->grad += n.grad;
        }
    }
}

// --- elementwise / linear algebra --------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    const int ia = a.id(), ib = b.id();
    return a.graph().emit(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, int self) {
        g.accumulate(ia, g.grad_of(self));
        g.accumulate(ib, g.grad_of(self));
    });
}

Var scale(const Var& a, double s) {
    const int ia = a.id();
    return a.graph().emit(a.value() * s, {a}, [ia, s](Graph& g, int self) {
        g.accumulate(ia, g.grad_of(self) * s);
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Matrix& X = x.value();
    const Matrix& W = weight.value();
    if (X.cols() != W.rows())
        throw ShapeError("linear: input width " + std::to_string(X.cols()) + " vs weight rows " +
                         std::to_string(W.rows()));
    Matrix y = X * W;
    if (bias.valid()) {
        if (bias.rows() != 1 || bias.cols() != W.cols()) throw ShapeError("linear: bias shape");
        y.rowwise() += bias.value().row(0);
    }
    const int ix = x.id(), iw = weight.id(), ib = bias.valid() ? bias.id() : -1;
    return x.graph().emit(std::move(y), {x, weight, bias}, [ix, iw, ib](Graph& g, int self) {
        const Matrix& dy = g.grad_of(self);
        if (g.needs_grad(ix)) g.accumulate(ix, dy * g.value_of(iw).transpose());
        if (g.needs_grad(iw)) g.accumulate(iw, g.value_of(ix).transpose() * dy);
        if (ib >= 0 && g.needs_grad(ib)) g.accumulate(ib, dy.colwise().sum());
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps) {
    const Matrix& X = x.value();
    const Index n = X.rows(), c = X.cols();
    if (gain.rows() != 1 || gain.cols() != c || shift.rows() != 1 || shift.cols() != c)
        throw ShapeError("layer_norm: gain/shift must be 1x" + std::to_string(c));
    auto xhat = std::make_shared<Matrix>(n, c);
    auto inv_std = std::make_shared<Eigen::VectorXd>(n);
    for (Index r = 0; r < n; ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(r) = is;
        xhat->row(r) = (X.row(r).array() - mu) * is;
    }
    Matrix y = (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() +
               shift.value().row(0).array();
    const int ix = x.id(), ig = gain.id(), ish = shift.id();
    return x.graph().emit(std::move(y), {x, gain, shift},
                          [ix, ig, ish, xhat, inv_std](Graph& g, int self) {
        const Matrix& dy = g.grad_of(self);
        if (g.needs_grad(ig)) g.accumulate(ig, (dy.array() * xhat->array()).colwise().sum().matrix());
        if (g.needs_grad(ish)) g.accumulate(ish, dy.colwise().sum());
        if (g.needs_grad(ix)) {
            const auto& G = g.value_of(ig);
            Matrix dxhat = dy.array().rowwise() * G.row(0).array();
            const double c = static_cast<double>(dxhat.cols());
            Matrix dx(dxhat.rows(), dxhat.cols());
            for (Index r = 0; r < dxhat.rows(); ++r) {
                const double m1 = dxhat.row(r).sum() / c;
                const double m2 = dxhat.row(r).dot(xhat->row(r)) / c;
                dx.row(r) = ((dxhat.row(r).array() - m1 - xhat->row(r).array() * m2) * (*inv_std)(r)).matrix();
            }
            g.accumulate(ix, dx);
        }
    });
}

Var gelu(const Var& x) {
    static constexpr double a = 0.7978845608028654; // sqrt(2/pi)
    static constexpr double b = 0.044715;
    const Matrix& X = x.value();
    auto t = std::make_shared<Matrix>((a * (X.array() + b * X.array().cube())).tanh().matrix());
    Matrix y = (0.5 * X.array() * (1.0 + t->array())).matrix();
    const int ix = x.id();
    return x.graph().emit(std::move(y), {x}, [ix, t](Graph& g, int self) {
        const auto X = g.value_of(ix).array();
        const auto T = t->array();
        Matrix d = (0.5 * (1.0 + T) + 0.5 * X * (1.0 - T.square()) * a * (1.0 + 3.0 * b * X.square())).matrix();
        g.accumulate(ix, (g.grad_of(self).array() * d.array()).matrix());
    });
}

// --- structural ops --------------------------------------------------------------

Var gather_rows(const Var& x, std::span<const Index> rows) {
    const Matrix& X = x.value();
    Matrix y(static_cast<Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= X.rows()) throw IndexError("gather_rows: index out of range");
        y.row(static_cast<Index>(i)) = X.row(rows[i]);
    }
    const int ix = x.id();
    std::vector<Index> idx(rows.begin(), rows.end());
    return x.graph().emit(std::move(y), {x}, [ix, idx = std::move(idx)](Graph& g, int self) {
        if (!g.needs_grad(ix)) return;
        Matrix& dx = g.grad_buffer(ix);
        const Matrix& dy = g.grad_of(self);
        for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += dy.row(static_cast<Index>(i));
    });
}

Var slice_rows(const Var& x, Index start, Index count) {
    const Matrix& X = x.value();
    if (start < 0 || count < 0 || start + count > X.rows()) throw IndexError("slice_rows: out of range");
    const int ix = x.id();
    return x.graph().emit(X.middleRows(start, count), {x}, [ix, start, count](Graph& g, int self) {
        if (!g.needs_grad(ix)) return;
        g.grad_buffer(ix).middleRows(start, count) += g.grad_of(self);
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Graph& graph = parts.front().graph();
    const Index c = parts.front().cols();
    Index total = 0;
    for (const Var& p : parts) {
        if (p.cols() != c) throw ShapeError("concat_rows: width mismatch");
        total += p.rows();
    }
    Matrix y(total, c);
    std::vector<std::pair<int, Index>> spans;
    Index offset = 0;
    // emit() takes a fixed parent list; any part that needs a gradient makes
    // the result need one.
    Var flag;
    for (const Var& p : parts) {
        y.middleRows(offset, p.rows()) = p.value();
        spans.emplace_back(p.id(), offset);
        if (graph.requires_grad(p)) flag = p;
        offset += p.rows();
    }
    return graph.emit(std::move(y), {flag}, [spans = std::move(spans)](Graph& g, int self) {
        const Matrix& dy = g.grad_of(self);
        for (const auto& [id, off] : spans) {
            if (!g.needs_grad(id)) continue;
            const Index r = g.value_of(id).rows();
            g.accumulate(id, dy.middleRows(off, r));
        }
    });
}

Var merge_2x2(const Var& x, Index h, Index w) {
    const Matrix& X = x.value();
    if (h * w != X.rows()) throw ShapeError("merge_2x2: grid does not match token count");
    if (h % 2 != 0 || w % 2 != 0)
        throw ShapeError("merge_2x2: odd grid " + std::to_string(h) + "x" + std::to_string(w));
    const Index c = X.cols(), oh = h / 2, ow = w / 2;
    Matrix y(oh * ow, 4 * c);
    auto src = [w](Index r, Index col) { return r * w + col; };
    for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) {
            const Index o = i * ow + j;
            y.row(o).segment(0, c) = X.row(src(2 * i, 2 * j));
            y.row(o).segment(c, c) = X.row(src(2 * i + 1, 2 * j));
            y.row(o).segment(2 * c, c) = X.row(src(2 * i, 2 * j + 1));
            y.row(o).segment(3 * c, c) = X.row(src(2 * i + 1, 2 * j + 1));
        }
    }
    const int ix = x.id();
    return x.graph().emit(std::move(y), {x}, [ix, oh, ow, w, c](Graph& g, int self) {
        if (!g.needs_grad(ix)) return;
        Matrix& dx = g.grad_buffer(ix);
        const Matrix& dy = g.grad_of(self);
        for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) {
                const Index o = i * ow + j;
                dx.row((2 * i) * w + 2 * j) += dy.row(o).segment(0, c);
                dx.row((2 * i + 1) * w + 2 * j) += dy.row(o).segment(c, c);
                dx.row((2 * i) * w + 2 * j + 1) += dy.row(o).segment(2 * c, c);
                dx.row((2 * i + 1) * w + 2 * j + 1) += dy.row(o).segment(3 * c, c);
            }
        }
    });
}

// --- reductions / losses -------------------------------------------------------

Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_id) {
    const Matrix& L = logits.value();
    if (static_cast<Index>(targets.size()) != L.rows()) throw ShapeError("cross_entropy: target length");
    auto probs = std::make_shared<Matrix>(L.rows(), L.cols());
    double total = 0.0;
    Index count = 0;
    for (Index t = 0; t < L.rows(); ++t) {
        const double mx = L.row(t).maxCoeff();
        probs->row(t) = (L.row(t).array() - mx).exp().matrix();
        const double z = probs->row(t).sum();
        probs->row(t) /= z;
        const int target = targets[static_cast<std::size_t>(t)];
        if (target == ignore_id) continue;
        if (target < 0 || target >= L.cols()) throw IndexError("cross_entropy: target id out of range");
        total += -(L(t, target) - mx - std::log(z));
        ++count;
    }
    if (count == 0) throw EmptyTarget("cross_entropy: every target position is padding");
    Matrix y(1, 1);
    y(0, 0) = total / static_cast<double>(count);
    const int il = logits.id();
    std::vector<int> tgt(targets.begin(), targets.end());
    return logits.graph().emit(std::move(y), {logits},
                               [il, probs, tgt = std::move(tgt), ignore_id, count](Graph& g, int self) {
        const double scale = g.grad_of(self)(0, 0) / static_cast<double>(count);
        Matrix d = *probs;
        for (Index t = 0; t < d.rows(); ++t) {
            const int target = tgt[static_cast<std::size_t>(t)];
            if (target == ignore_id) {
                d.row(t).setZero();
                continue;
            }
            d(t, target) -= 1.0;
        }
        g.accumulate(il, d * scale);
    });
}

Var weighted_sum(const Var& x, const Matrix& weights) {
    require_same_shape(x.value(), weights, "weighted_sum");
    Matrix y(1, 1);
    y(0, 0) = (x.value().array() * weights.array()).sum();
    const int ix = x.id();
    return x.graph().emit(std::move(y), {x}, [ix, weights](Graph& g, int self) {
        g.accumulate(ix, weights * g.grad_of(self)(0, 0));
    });
}

Var sum(const Var& x) {
    Matrix y(1, 1);
    y(0, 0) = x.value().sum();
    const int ix = x.id();
    const Index r = x.rows(), c = x.cols();
    return x.graph().emit(std::move(y), {x}, [ix, r, c](Graph& g, int self) {
        g.accumulate(ix, Matrix::Constant(r, c, g.grad_of(self)(0, 0)));
    });
}

// --- attention -------------------------------------------------------------------

Var attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec) {
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    const Index nq = Q.rows(), nk = K.rows(), c = Q.cols();
    if (K.cols() != c || V.cols() != c || V.rows() != nk) throw ShapeError("attention: q/k/v widths differ");
    if (spec.heads <= 0 || c % spec.heads != 0) throw ShapeError("attention: width not divisible by heads");
    const Index gq = spec.query_group == 0 ? nq : spec.query_group;
    const Index gk = spec.key_group == 0 ? nk : spec.key_group;
    if (gq <= 0 || gk <= 0 || nq % gq != 0 || nk % gk != 0 || nq / gq != nk / gk)
        throw ShapeError("attention: inconsistent grouping");
    const Index groups = nq / gq;
    const Index heads = spec.heads;
    const Index dh = c / heads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    if (!spec.key_valid.empty() && static_cast<Index>(spec.key_valid.size()) != nk)
        throw ShapeError("attention: key mask length");
    if (spec.bias.valid() && (spec.bias.rows() != gq * gk || spec.bias.cols() != heads))
        throw ShapeError("attention: bias shape");
    if (!spec.query_order.empty() && static_cast<Index>(spec.query_order.size()) != nq)
        throw ShapeError("attention: query order length");
    if (!spec.key_order.empty() && static_cast<Index>(spec.key_order.size()) != nk)
        throw ShapeError("attention: key order length");

    auto qrow = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(nq));
    auto krow = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(nk));
    for (Index i = 0; i < nq; ++i) (*qrow)[i] = spec.query_order.empty() ? i : spec.query_order[i];
    for (Index i = 0; i < nk; ++i) (*krow)[i] = spec.key_order.empty() ? i : spec.key_order[i];

    // Additive mask shared by all heads of a group; -inf hides a key.
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(groups * heads));
    Matrix out(nq, c);
    Matrix qg(gq, dh), kg(gk, dh), vg(gk, dh), s(gq, gk), mask(gq, gk);
    for (Index grp = 0; grp < groups; ++grp) {
        mask.setZero();
        for (Index i = 0; i < gq; ++i) {
            for (Index j = 0; j < gk; ++j) {
                const Index key = (*krow)[grp * gk + j];
                const bool hidden = (!spec.key_valid.empty() && !spec.key_valid[key]) || (spec.causal && j > i);
                if (hidden) mask(i, j) = neg_inf;
            }
        }
        for (Index h = 0; h < heads; ++h) {
            for (Index i = 0; i < gq; ++i) qg.row(i) = Q.row((*qrow)[grp * gq + i]).segment(h * dh, dh);
            for (Index j = 0; j < gk; ++j) {
                kg.row(j) = K.row((*krow)[grp * gk + j]).segment(h * dh, dh);
                vg.row(j) = V.row((*krow)[grp * gk + j]).segment(h * dh, dh);
            }
            s.noalias() = qg * kg.transpose();
            s *= sc;
            if (spec.bias.valid()) {
                const Matrix& B = spec.bias.value();
                for (Index i = 0; i < gq; ++i)
                    for (Index j = 0; j < gk; ++j) s(i, j) += B(i * gk + j, h);
            }
            s += mask;
            Matrix& p = (*probs)[static_cast<std::size_t>(grp * heads + h)];
            p.resize(gq, gk);
            for (Index i = 0; i < gq; ++i) {
                const double mx = s.row(i).maxCoeff();
                if (mx == neg_inf) throw MaskError("attention: every key is masked for a query");
                p.row(i) = (s.row(i).array() - mx).exp().matrix();
                p.row(i) /= p.row(i).sum();
            }
            Matrix o = p * vg;
            for (Index i = 0; i < gq; ++i) out.row((*qrow)[grp * gq + i]).segment(h * dh, dh) = o.row(i);
        }
    }
    if (spec.capture) *spec.capture = *probs;

    const int iq = q.id(), ik = k.id(), iv = v.id(), ib = spec.bias.valid() ? spec.bias.id() : -1;
    return q.graph().emit(std::move(out), {q, k, v, spec.bias},
                          [=](Graph& g, int self) {
        const Matrix& dout = g.grad_of(self);
        const Matrix& Qv = g.value_of(iq);
        const Matrix& Kv = g.value_of(ik);
        const Matrix& Vv = g.value_of(iv);
        const bool want_q = g.needs_grad(iq), want_k = g.needs_grad(ik), want_v = g.needs_grad(iv);
        const bool want_b = ib >= 0 && g.needs_grad(ib);
        Matrix* dq = want_q ? &g.grad_buffer(iq) : nullptr;
        Matrix* dk = want_k ? &g.grad_buffer(ik) : nullptr;
        Matrix* dv = want_v ? &g.grad_buffer(iv) : nullptr;
        Matrix* db = want_b ? &g.grad_buffer(ib) : nullptr;
        Matrix qg(gq, dh), kg(gk, dh), vg(gk, dh), dog(gq, dh);
        for (Index grp = 0; grp < groups; ++grp) {
            for (Index h = 0; h < heads; ++h) {
                const Matrix& p = (*probs)[static_cast<std::size_t>(grp * heads + h)];
                for (Index i = 0; i < gq; ++i) {
                    const Index r = (*qrow)[grp * gq + i];
                    qg.row(i) = Qv.row(r).segment(h * dh, dh);
                    dog.row(i) = dout.row(r).segment(h * dh, dh);
                }
                for (Index j = 0; j < gk; ++j) {
                    const Index r = (*krow)[grp * gk + j];
                    kg.row(j) = Kv.row(r).segment(h * dh, dh);
                    vg.row(j) = Vv.row(r).segment(h * dh, dh);
                }
                if (dv) {
                    Matrix dvg = p.transpose() * dog;
                    for (Index j = 0; j < gk; ++j) dv->row((*krow)[grp * gk + j]).segment(h * dh, dh) += dvg.row(j);
                }
                if (!(dq || dk || db)) continue;
                Matrix dp = dog * vg.transpose();
                Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
                Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix();
                if (db) {
                    for (Index i = 0; i < gq; ++i)
                        for (Index j = 0; j < gk; ++j) (*db)(i * gk + j, h) += ds(i, j);
                }
                if (dq) {
                    Matrix dqg = ds * kg * sc;
                    for (Index i = 0; i < gq; ++i) dq->row((*qrow)[grp * gq + i]).segment(h * dh, dh) += dqg.row(i);
                }
                if (dk) {
                    Matrix dkg = ds.transpose() * qg * sc;
                    for (Index j = 0; j < gk; ++j) dk->row((*krow)[grp * gk + j]).segment(h * dh, dh) += dkg.row(j);
                }
            }
        }
    });
}

} // namespace pm
