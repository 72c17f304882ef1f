#include "malefic/graph.hpp"

#include <cmath>

namespace malefic::diff {

int32_t Tape::make_node(Tensor val, bool needs_grad, std::function<void(Tape&, int32_t)> back) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.back = needs_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<int32_t>(nodes_.size() - 1);
}

Tape::Node& Tape::node(Value v) {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
        throw StateError("tape: value handle does not belong to this tape");
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Value v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
        throw StateError("tape: value handle does not belong to this tape");
    return nodes_[static_cast<size_t>(v.id)];
}

Tensor& Tape::grad_buf(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() || n.grad.size() != n.val.size()) n.grad = Tensor::zeros(n.val.shape());
    n.touched = true;
    return n.grad;
}

const Tensor& Tape::value(Value v) const { return node(v).val; }

Tensor Tape::grad(Value v) const {
    const Node& n = node(v);
    if (!n.touched || n.grad.empty()) return Tensor::zeros(n.val.shape());
    return n.grad;
}

void Tape::reset() {
    nodes_.clear();
    param_nodes_.clear();
    backward_done_ = false;
}

Value Tape::constant(Tensor t) { return {make_node(std::move(t), false, nullptr)}; }

Value Tape::leaf(Tensor t) { return {make_node(std::move(t), true, nullptr)}; }

Value Tape::param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {it->second};
    const int32_t id = make_node(p.value, true, nullptr);
    nodes_[static_cast<size_t>(id)].bound = &p;
    param_nodes_.emplace(&p, id);
    return {id};
}

void Tape::backward(Value out) {
    const Node& o = node(out);
    if (backward_done_) throw StateError("tape: backward already ran; reset() first");
    if (o.val.size() != 1)
        throw ParamError("backward: output must be scalar, got shape " + o.val.shape_str());
    backward_done_ = true;
    grad_buf(out.id)[0] = 1.0;
    for (int32_t id = out.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.touched && n.back) n.back(*this, id);
    }
    for (auto& [p, id] : param_nodes_) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.touched) continue;
        for (int64_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
}

namespace {

// Broadcast classes accepted by add/sub/mul.
enum class EwKind { SameShape, RowBroadcast };

EwKind ew_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return EwKind::SameShape;
    if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.dim(0)) return EwKind::RowBroadcast;
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace

Value Tape::add(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const EwKind kind = ew_kind(A, B, "add");
    Tensor out = A;
    if (kind == EwKind::SameShape) {
        for (int64_t i = 0; i < out.size(); ++i) out[i] += B[i];
    } else {
        const int64_t R = A.rows(), C = A.cols();
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) out.at(r, c) += B[c];
    }
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    return {make_node(std::move(out), ng, [pa = a.id, pb = b.id, kind](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.wants_grad(pa)) {
            Tensor& ga = t.grad_buf(pa);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.wants_grad(pb)) {
            Tensor& gb = t.grad_buf(pb);
            if (kind == EwKind::SameShape) {
                for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            } else {
                const int64_t C = gb.size();
                for (int64_t i = 0; i < g.size(); ++i) gb[i % C] += g[i];
            }
        }
    })};
}

Value Tape::sub(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const EwKind kind = ew_kind(A, B, "sub");
    Tensor out = A;
    if (kind == EwKind::SameShape) {
        for (int64_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    } else {
        const int64_t R = A.rows(), C = A.cols();
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) out.at(r, c) -= B[c];
    }
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    return {make_node(std::move(out), ng, [pa = a.id, pb = b.id, kind](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.wants_grad(pa)) {
            Tensor& ga = t.grad_buf(pa);
            for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.wants_grad(pb)) {
            Tensor& gb = t.grad_buf(pb);
            if (kind == EwKind::SameShape) {
                for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            } else {
                const int64_t C = gb.size();
                for (int64_t i = 0; i < g.size(); ++i) gb[i % C] -= g[i];
            }
        }
    })};
}

Value Tape::mul(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const EwKind kind = ew_kind(A, B, "mul");
    Tensor out = A;
    if (kind == EwKind::SameShape) {
        for (int64_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    } else {
        const int64_t C = B.size();
        for (int64_t i = 0; i < out.size(); ++i) out[i] *= B[i % C];
    }
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    return {make_node(std::move(out), ng, [pa = a.id, pb = b.id, kind](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
        const Tensor& B = t.nodes_[static_cast<size_t>(pb)].val;
        const int64_t C = B.size();
        if (t.wants_grad(pa)) {
            Tensor& ga = t.grad_buf(pa);
            for (int64_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * (kind == EwKind::SameShape ? B[i] : B[i % C]);
        }
        if (t.wants_grad(pb)) {
            Tensor& gb = t.grad_buf(pb);
            if (kind == EwKind::SameShape) {
                for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
            } else {
                for (int64_t i = 0; i < g.size(); ++i) gb[i % C] += g[i] * A[i];
            }
        }
    })};
}

Value Tape::scale(Value a, double s) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return {make_node(std::move(out), node(a).needs_grad, [pa = a.id, s](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        if (!t.wants_grad(pa)) return;
        Tensor& ga = t.grad_buf(pa);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    })};
}

Value Tape::add_n(const std::vector<Value>& xs) {
    if (xs.empty()) throw ParamError("add_n: empty operand list");
    Tensor out = value(xs[0]);
    bool ng = node(xs[0]).needs_grad;
    for (size_t i = 1; i < xs.size(); ++i) {
        const Tensor& X = value(xs[i]);
        require_same_shape(out, X, "add_n");
        for (int64_t j = 0; j < out.size(); ++j) out[j] += X[j];
        ng = ng || node(xs[i]).needs_grad;
    }
    std::vector<int32_t> ids(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) ids[i] = xs[i].id;
    return {make_node(std::move(out), ng, [ids = std::move(ids)](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (int32_t pid : ids) {
            if (!t.wants_grad(pid)) continue;
            Tensor& gp = t.grad_buf(pid);
            for (int64_t i = 0; i < g.size(); ++i) gp[i] += g[i];
        }
    })};
}

Value Tape::matmul(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    if (A.rank() == 2 && B.rank() == 2) {
        if (A.cols() != B.rows())
            throw ShapeError("matmul: inner dimensions differ, " + A.shape_str() + " @ " +
                             B.shape_str());
        const int64_t M = A.rows(), K = A.cols(), N = B.cols();
        Tensor out({M, N});
        for (int64_t i = 0; i < M; ++i)
            for (int64_t k = 0; k < K; ++k) {
                const double av = A.at(i, k);
                for (int64_t j = 0; j < N; ++j) out.at(i, j) += av * B.at(k, j);
            }
        return {make_node(std::move(out), ng, [pa = a.id, pb = b.id](Tape& t, int32_t self) {
            const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
            const Tensor& B = t.nodes_[static_cast<size_t>(pb)].val;
            const int64_t M = A.rows(), K = A.cols(), N = B.cols();
            if (t.wants_grad(pa)) {  // dA = g @ B^T
                Tensor& ga = t.grad_buf(pa);
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t j = 0; j < N; ++j) {
                        const double gv = g.at(i, j);
                        for (int64_t k = 0; k < K; ++k) ga.at(i, k) += gv * B.at(k, j);
                    }
            }
            if (t.wants_grad(pb)) {  // dB = A^T @ g
                Tensor& gb = t.grad_buf(pb);
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t k = 0; k < K; ++k) {
                        const double av = A.at(i, k);
                        for (int64_t j = 0; j < N; ++j) gb.at(k, j) += av * g.at(i, j);
                    }
            }
        })};
    }
    if (A.rank() == 2 && B.rank() == 1) {
        if (A.cols() != B.dim(0))
            throw ShapeError("matmul: inner dimensions differ, " + A.shape_str() + " @ " +
                             B.shape_str());
        const int64_t M = A.rows(), K = A.cols();
        Tensor out({M});
        for (int64_t i = 0; i < M; ++i) {
            double s = 0.0;
            for (int64_t k = 0; k < K; ++k) s += A.at(i, k) * B[k];
            out[i] = s;
        }
        return {make_node(std::move(out), ng, [pa = a.id, pb = b.id](Tape& t, int32_t self) {
            const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
            const Tensor& B = t.nodes_[static_cast<size_t>(pb)].val;
            const int64_t M = A.rows(), K = A.cols();
            if (t.wants_grad(pa)) {
                Tensor& ga = t.grad_buf(pa);
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t k = 0; k < K; ++k) ga.at(i, k) += g[i] * B[k];
            }
            if (t.wants_grad(pb)) {
                Tensor& gb = t.grad_buf(pb);
                for (int64_t i = 0; i < M; ++i)
                    for (int64_t k = 0; k < K; ++k) gb[k] += g[i] * A.at(i, k);
            }
        })};
    }
    if (A.rank() == 1 && B.rank() == 2) {
        if (A.dim(0) != B.rows())
            throw ShapeError("matmul: inner dimensions differ, " + A.shape_str() + " @ " +
                             B.shape_str());
        const int64_t K = B.rows(), N = B.cols();
        Tensor out({N});
        for (int64_t k = 0; k < K; ++k) {
            const double av = A[k];
            for (int64_t j = 0; j < N; ++j) out[j] += av * B.at(k, j);
        }
        return {make_node(std::move(out), ng, [pa = a.id, pb = b.id](Tape& t, int32_t self) {
            const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
            const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
            const Tensor& B = t.nodes_[static_cast<size_t>(pb)].val;
            const int64_t K = B.rows(), N = B.cols();
            if (t.wants_grad(pa)) {
                Tensor& ga = t.grad_buf(pa);
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t j = 0; j < N; ++j) ga[k] += g[j] * B.at(k, j);
            }
            if (t.wants_grad(pb)) {
                Tensor& gb = t.grad_buf(pb);
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t j = 0; j < N; ++j) gb.at(k, j) += A[k] * g[j];
            }
        })};
    }
    throw ShapeError("matmul: unsupported ranks " + A.shape_str() + " @ " + B.shape_str());
}

Value Tape::matmul_tb(Value a, Value b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
        throw ShapeError("matmul_tb: need [mxk] and [nxk], got " + A.shape_str() + " and " +
                         B.shape_str());
    const int64_t M = A.rows(), K = A.cols(), N = B.rows();
    Tensor out({M, N});
    for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) {
            double s = 0.0;
            for (int64_t k = 0; k < K; ++k) s += A.at(i, k) * B.at(j, k);
            out.at(i, j) = s;
        }
    const bool ng = node(a).needs_grad || node(b).needs_grad;
    return {make_node(std::move(out), ng, [pa = a.id, pb = b.id](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
        const Tensor& B = t.nodes_[static_cast<size_t>(pb)].val;
        const int64_t M = A.rows(), K = A.cols(), N = B.rows();
        if (t.wants_grad(pa)) {  // dA = g @ B
            Tensor& ga = t.grad_buf(pa);
            for (int64_t i = 0; i < M; ++i)
                for (int64_t j = 0; j < N; ++j) {
                    const double gv = g.at(i, j);
                    for (int64_t k = 0; k < K; ++k) ga.at(i, k) += gv * B.at(j, k);
                }
        }
        if (t.wants_grad(pb)) {  // dB = g^T @ A
            Tensor& gb = t.grad_buf(pb);
            for (int64_t i = 0; i < M; ++i)
                for (int64_t j = 0; j < N; ++j) {
                    const double gv = g.at(i, j);
                    for (int64_t k = 0; k < K; ++k) gb.at(j, k) += gv * A.at(i, k);
                }
        }
    })};
}

Value Tape::leaky_relu(Value a, double negative_slope) {
    const Tensor& A = value(a);
    Tensor out = A;
    for (int64_t i = 0; i < out.size(); ++i)
        if (out[i] <= 0.0) out[i] *= negative_slope;
    return {make_node(std::move(out), node(a).needs_grad,
                      [pa = a.id, negative_slope](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          const Tensor& A = t.nodes_[static_cast<size_t>(pa)].val;
                          if (!t.wants_grad(pa)) return;
                          Tensor& ga = t.grad_buf(pa);
                          for (int64_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * (A[i] > 0.0 ? 1.0 : negative_slope);
                      })};
}

Value Tape::dropout(Value a, double p, bool training, Rng* rng) {
    if (p < 0.0 || p >= 1.0) throw ParamError("dropout: rate must be in [0,1), got " + std::to_string(p));
    if (!training || p == 0.0) return a;
    if (!rng) throw ParamError("dropout: training mode requires an RNG");
    const Tensor& A = value(a);
    std::vector<uint8_t> keep(static_cast<size_t>(A.size()));
    for (auto& k : keep) k = rand_uniform(*rng) >= p ? 1 : 0;
    return dropout_with_mask(a, std::move(keep), p);
}

Value Tape::dropout_with_mask(Value a, std::vector<uint8_t> keep, double p) {
    if (p < 0.0 || p >= 1.0) throw ParamError("dropout: rate must be in [0,1), got " + std::to_string(p));
    const Tensor& A = value(a);
    if (static_cast<int64_t>(keep.size()) != A.size())
        throw ShapeError("dropout: mask size " + std::to_string(keep.size()) +
                         " does not match tensor " + A.shape_str());
    const double inv = 1.0 / (1.0 - p);
    Tensor out = A;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = keep[static_cast<size_t>(i)] ? out[i] * inv : 0.0;
    return {make_node(std::move(out), node(a).needs_grad,
                      [pa = a.id, keep = std::move(keep), inv](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          if (!t.wants_grad(pa)) return;
                          Tensor& ga = t.grad_buf(pa);
                          for (int64_t i = 0; i < g.size(); ++i)
                              if (keep[static_cast<size_t>(i)]) ga[i] += g[i] * inv;
                      })};
}

namespace {

// softmax over a strided slice, writing in place
void softmax_slice(const Tensor& in, Tensor& out, int64_t base, int64_t stride, int64_t n) {
    double mx = in[base];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * stride]);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double e = std::exp(in[base + i * stride] - mx);
        out[base + i * stride] = e;
        sum += e;
    }
    for (int64_t i = 0; i < n; ++i) out[base + i * stride] /= sum;
}

void softmax_slice_backward(const Tensor& s, const Tensor& g, Tensor& gx, int64_t base,
                            int64_t stride, int64_t n) {
    double dot = 0.0;
    for (int64_t i = 0; i < n; ++i) dot += g[base + i * stride] * s[base + i * stride];
    for (int64_t i = 0; i < n; ++i) {
        const int64_t k = base + i * stride;
        gx[k] += s[k] * (g[k] - dot);
    }
}

}  // namespace

Value Tape::softmax(Value a, int axis) {
    const Tensor& A = value(a);
    Tensor out = A;
    if (A.rank() == 1) {
        softmax_slice(A, out, 0, 1, A.size());
        axis = 0;
    } else if (A.rank() == 2) {
        const int64_t R = A.rows(), C = A.cols();
        if (axis == 0) {
            for (int64_t c = 0; c < C; ++c) softmax_slice(A, out, c, C, R);
        } else if (axis == 1) {
            for (int64_t r = 0; r < R; ++r) softmax_slice(A, out, r * C, 1, C);
        } else {
            throw ParamError("softmax: axis must be 0 or 1 for rank-2 input");
        }
    } else {
        throw ShapeError("softmax: rank must be 1 or 2, got " + A.shape_str());
    }
    return {make_node(std::move(out), node(a).needs_grad,
                      [pa = a.id, axis](Tape& t, int32_t self) {
                          const Node& sn = t.nodes_[static_cast<size_t>(self)];
                          const Tensor& s = sn.val;
                          const Tensor& g = sn.grad;
                          if (!t.wants_grad(pa)) return;
                          Tensor& gx = t.grad_buf(pa);
                          if (s.rank() == 1) {
                              softmax_slice_backward(s, g, gx, 0, 1, s.size());
                          } else {
                              const int64_t R = s.rows(), C = s.cols();
                              if (axis == 0)
                                  for (int64_t c = 0; c < C; ++c)
                                      softmax_slice_backward(s, g, gx, c, C, R);
                              else
                                  for (int64_t r = 0; r < R; ++r)
                                      softmax_slice_backward(s, g, gx, r * C, 1, C);
                          }
                      })};
}

Value Tape::masked_softmax_cols(Value a, std::vector<uint8_t> avail) {
    const Tensor& A = value(a);
    if (A.rank() != 2)
        throw ShapeError("masked_softmax_cols: need rank 2, got " + A.shape_str());
    const int64_t M = A.rows(), C = A.cols();
    if (static_cast<int64_t>(avail.size()) != M)
        throw ShapeError("masked_softmax_cols: mask length " + std::to_string(avail.size()) +
                         " does not match rows of " + A.shape_str());
    int n_avail = 0;
    for (uint8_t f : avail) n_avail += f ? 1 : 0;
    if (n_avail == 0) throw DataError("masked_softmax_cols: no available modality");
    Tensor out({M, C});
    for (int64_t c = 0; c < C; ++c) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t m = 0; m < M; ++m)
            if (avail[static_cast<size_t>(m)]) mx = std::max(mx, A.at(m, c));
        double sum = 0.0;
        for (int64_t m = 0; m < M; ++m) {
            if (!avail[static_cast<size_t>(m)]) continue;
            const double e = std::exp(A.at(m, c) - mx);
            out.at(m, c) = e;
            sum += e;
        }
        for (int64_t m = 0; m < M; ++m)
            if (avail[static_cast<size_t>(m)]) out.at(m, c) /= sum;
    }
    return {make_node(std::move(out), node(a).needs_grad,
                      [pa = a.id, avail = std::move(avail)](Tape& t, int32_t self) {
                          const Node& sn = t.nodes_[static_cast<size_t>(self)];
                          const Tensor& s = sn.val;
                          const Tensor& g = sn.grad;
                          if (!t.wants_grad(pa)) return;
                          Tensor& gx = t.grad_buf(pa);
                          const int64_t M = s.rows(), C = s.cols();
                          for (int64_t c = 0; c < C; ++c) {
                              double dot = 0.0;
                              for (int64_t m = 0; m < M; ++m)
                                  if (avail[static_cast<size_t>(m)]) dot += g.at(m, c) * s.at(m, c);
                              for (int64_t m = 0; m < M; ++m)
                                  if (avail[static_cast<size_t>(m)])
                                      gx.at(m, c) += s.at(m, c) * (g.at(m, c) - dot);
                          }
                      })};
}

Value Tape::layer_norm(Value x, Value gamma, Value beta, double eps) {
    const Tensor& X = value(x);
    const Tensor& G = value(gamma);
    const Tensor& B = value(beta);
    if (X.rank() != 1 && X.rank() != 2)
        throw ShapeError("layer_norm: input rank must be 1 or 2, got " + X.shape_str());
    const int64_t C = X.rank() == 2 ? X.cols() : X.dim(0);
    const int64_t R = X.rank() == 2 ? X.rows() : 1;
    if (G.rank() != 1 || G.dim(0) != C || B.rank() != 1 || B.dim(0) != C)
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(C) + "], got " +
                         G.shape_str() + " and " + B.shape_str());
    Tensor out = X;
    for (int64_t r = 0; r < R; ++r) {
        const int64_t base = r * C;
        double mu = 0.0;
        for (int64_t c = 0; c < C; ++c) mu += X[base + c];
        mu /= static_cast<double>(C);
        double var = 0.0;
        for (int64_t c = 0; c < C; ++c) var += (X[base + c] - mu) * (X[base + c] - mu);
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t c = 0; c < C; ++c)
            out[base + c] = (X[base + c] - mu) * inv * G[c] + B[c];
    }
    const bool ng = node(x).needs_grad || node(gamma).needs_grad || node(beta).needs_grad;
    return {make_node(std::move(out), ng,
                      [px = x.id, pg = gamma.id, pb = beta.id, eps](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          const Tensor& X = t.nodes_[static_cast<size_t>(px)].val;
                          const Tensor& G = t.nodes_[static_cast<size_t>(pg)].val;
                          const int64_t C = X.rank() == 2 ? X.cols() : X.dim(0);
                          const int64_t R = X.rank() == 2 ? X.rows() : 1;
                          Tensor* gx = t.wants_grad(px) ? &t.grad_buf(px) : nullptr;
                          Tensor* gg = t.wants_grad(pg) ? &t.grad_buf(pg) : nullptr;
                          Tensor* gb = t.wants_grad(pb) ? &t.grad_buf(pb) : nullptr;
                          std::vector<double> xhat(static_cast<size_t>(C));
                          for (int64_t r = 0; r < R; ++r) {
                              const int64_t base = r * C;
                              double mu = 0.0;
                              for (int64_t c = 0; c < C; ++c) mu += X[base + c];
                              mu /= static_cast<double>(C);
                              double var = 0.0;
                              for (int64_t c = 0; c < C; ++c)
                                  var += (X[base + c] - mu) * (X[base + c] - mu);
                              var /= static_cast<double>(C);
                              const double inv = 1.0 / std::sqrt(var + eps);
                              for (int64_t c = 0; c < C; ++c)
                                  xhat[static_cast<size_t>(c)] = (X[base + c] - mu) * inv;
                              if (gb)
                                  for (int64_t c = 0; c < C; ++c) (*gb)[c] += g[base + c];
                              if (gg)
                                  for (int64_t c = 0; c < C; ++c)
                                      (*gg)[c] += g[base + c] * xhat[static_cast<size_t>(c)];
                              if (gx) {
                                  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                                  for (int64_t c = 0; c < C; ++c) {
                                      const double dxh = g[base + c] * G[c];
                                      mean_dxhat += dxh;
                                      mean_dxhat_xhat += dxh * xhat[static_cast<size_t>(c)];
                                  }
                                  mean_dxhat /= static_cast<double>(C);
                                  mean_dxhat_xhat /= static_cast<double>(C);
                                  for (int64_t c = 0; c < C; ++c) {
                                      const double dxh = g[base + c] * G[c];
                                      (*gx)[base + c] += inv * (dxh - mean_dxhat -
                                                                xhat[static_cast<size_t>(c)] *
                                                                    mean_dxhat_xhat);
                                  }
                              }
                          }
                      })};
}

Value Tape::conv1d(Value x, Value w, Value b) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    const Tensor& B = value(b);
    if (X.rank() != 2 || W.rank() != 3 || B.rank() != 1)
        throw ShapeError("conv1d: need x [TxCin], w [CoutxCinxK], b [Cout], got " + X.shape_str() +
                         ", " + W.shape_str() + ", " + B.shape_str());
    const int64_t T = X.rows(), Cin = X.cols();
    const int64_t Cout = W.dim(0), K = W.dim(2);
    if (W.dim(1) != Cin)
        throw ShapeError("conv1d: weight channels " + W.shape_str() + " do not match input " +
                         X.shape_str());
    if (B.dim(0) != Cout)
        throw ShapeError("conv1d: bias " + B.shape_str() + " does not match filters " +
                         std::to_string(Cout));
    if (K % 2 == 0 || K < 1) throw ParamError("conv1d: kernel width must be odd and positive");
    const int64_t pad = (K - 1) / 2;
    Tensor out({T, Cout});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t o = 0; o < Cout; ++o) {
            double s = B[o];
            for (int64_t k = 0; k < K; ++k) {
                const int64_t src = t + k - pad;
                if (src < 0 || src >= T) continue;
                for (int64_t i = 0; i < Cin; ++i) s += X.at(src, i) * W.at3(o, i, k);
            }
            out.at(t, o) = s;
        }
    const bool ng = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    return {make_node(std::move(out), ng,
                      [px = x.id, pw = w.id, pb = b.id](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          const Tensor& X = t.nodes_[static_cast<size_t>(px)].val;
                          const Tensor& W = t.nodes_[static_cast<size_t>(pw)].val;
                          const int64_t T = X.rows(), Cin = X.cols();
                          const int64_t Cout = W.dim(0), K = W.dim(2);
                          const int64_t pad = (K - 1) / 2;
                          Tensor* gx = t.wants_grad(px) ? &t.grad_buf(px) : nullptr;
                          Tensor* gw = t.wants_grad(pw) ? &t.grad_buf(pw) : nullptr;
                          Tensor* gb = t.wants_grad(pb) ? &t.grad_buf(pb) : nullptr;
                          for (int64_t tt = 0; tt < T; ++tt)
                              for (int64_t o = 0; o < Cout; ++o) {
                                  const double gv = g.at(tt, o);
                                  if (gv == 0.0) continue;
                                  if (gb) (*gb)[o] += gv;
                                  for (int64_t k = 0; k < K; ++k) {
                                      const int64_t src = tt + k - pad;
                                      if (src < 0 || src >= T) continue;
                                      for (int64_t i = 0; i < Cin; ++i) {
                                          if (gw) gw->at3(o, i, k) += gv * X.at(src, i);
                                          if (gx) gx->at(src, i) += gv * W.at3(o, i, k);
                                      }
                                  }
                              }
                      })};
}

Value Tape::mean_pool(Value x) {
    const Tensor& X = value(x);
    if (X.rank() != 2) throw ShapeError("mean_pool: need rank 2, got " + X.shape_str());
    const int64_t T = X.rows(), C = X.cols();
    Tensor out({C});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t c = 0; c < C; ++c) out[c] += X.at(t, c);
    for (int64_t c = 0; c < C; ++c) out[c] /= static_cast<double>(T);
    return {make_node(std::move(out), node(x).needs_grad, [px = x.id](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& X = t.nodes_[static_cast<size_t>(px)].val;
        if (!t.wants_grad(px)) return;
        Tensor& gx = t.grad_buf(px);
        const int64_t T = X.rows(), C = X.cols();
        const double inv = 1.0 / static_cast<double>(T);
        for (int64_t tt = 0; tt < T; ++tt)
            for (int64_t c = 0; c < C; ++c) gx.at(tt, c) += g[c] * inv;
    })};
}

Value Tape::concat(const std::vector<Value>& xs) {
    if (xs.empty()) throw ParamError("concat: empty operand list");
    int64_t total = 0;
    bool ng = false;
    for (Value v : xs) {
        const Tensor& X = value(v);
        if (X.rank() != 1) throw ShapeError("concat: all operands must be rank 1, got " + X.shape_str());
        total += X.size();
        ng = ng || node(v).needs_grad;
    }
    Tensor out({total});
    int64_t off = 0;
    std::vector<int32_t> ids(xs.size());
    std::vector<int64_t> offsets(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        const Tensor& X = value(xs[i]);
        ids[i] = xs[i].id;
        offsets[i] = off;
        for (int64_t j = 0; j < X.size(); ++j) out[off + j] = X[j];
        off += X.size();
    }
    return {make_node(std::move(out), ng,
                      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          for (size_t i = 0; i < ids.size(); ++i) {
                              if (!t.wants_grad(ids[i])) continue;
                              Tensor& gp = t.grad_buf(ids[i]);
                              for (int64_t j = 0; j < gp.size(); ++j) gp[j] += g[offsets[i] + j];
                          }
                      })};
}

Value Tape::stack_rows(const std::vector<Value>& xs) {
    if (xs.empty()) throw ParamError("stack_rows: empty operand list");
    const int64_t C = value(xs[0]).size();
    bool ng = false;
    for (Value v : xs) {
        const Tensor& X = value(v);
        if (X.rank() != 1 || X.size() != C)
            throw ShapeError("stack_rows: all rows must be rank-1 of length " + std::to_string(C) +
                             ", got " + X.shape_str());
        ng = ng || node(v).needs_grad;
    }
    const int64_t M = static_cast<int64_t>(xs.size());
    Tensor out({M, C});
    std::vector<int32_t> ids(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        ids[i] = xs[i].id;
        const Tensor& X = value(xs[i]);
        for (int64_t c = 0; c < C; ++c) out.at(static_cast<int64_t>(i), c) = X[c];
    }
    return {make_node(std::move(out), ng, [ids = std::move(ids), C](Tape& t, int32_t self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        for (size_t i = 0; i < ids.size(); ++i) {
            if (!t.wants_grad(ids[i])) continue;
            Tensor& gp = t.grad_buf(ids[i]);
            for (int64_t c = 0; c < C; ++c) gp[c] += g.at(static_cast<int64_t>(i), c);
        }
    })};
}

Value Tape::cross_entropy(Value logits, int label) {
    const Tensor& L = value(logits);
    if (L.rank() != 1) throw ShapeError("cross_entropy: logits must be rank 1, got " + L.shape_str());
    if (label < 0 || label >= L.size())
        throw ParamError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                         L.shape_str());
    double mx = L[0];
    for (int64_t i = 1; i < L.size(); ++i) mx = std::max(mx, L[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < L.size(); ++i) sum += std::exp(L[i] - mx);
    const double lse = mx + std::log(sum);
    Tensor out = Tensor::scalar(lse - L[label]);
    return {make_node(std::move(out), node(logits).needs_grad,
                      [pl = logits.id, label, lse](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          const Tensor& L = t.nodes_[static_cast<size_t>(pl)].val;
                          if (!t.wants_grad(pl)) return;
                          Tensor& gl = t.grad_buf(pl);
                          for (int64_t i = 0; i < L.size(); ++i) {
                              const double p = std::exp(L[i] - lse);
                              gl[i] += g[0] * (p - (i == label ? 1.0 : 0.0));
                          }
                      })};
}

Value Tape::select_fuse(Value docked, Value probs, std::vector<int> chosen,
                        bool straight_through) {
    const Tensor& D = value(docked);
    const Tensor& P = value(probs);
    if (D.rank() != 2 || !D.same_shape(P))
        throw ShapeError("select_fuse: docked and probs must be equal rank-2 shapes, got " +
                         D.shape_str() + " and " + P.shape_str());
    const int64_t M = D.rows(), C = D.cols();
    if (static_cast<int64_t>(chosen.size()) != C)
        throw ShapeError("select_fuse: chosen length " + std::to_string(chosen.size()) +
                         " does not match dimensions " + std::to_string(C));
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) {
        const int m = chosen[static_cast<size_t>(c)];
        if (m < 0 || m >= M)
            throw ParamError("select_fuse: chosen[" + std::to_string(c) + "] = " +
                             std::to_string(m) + " out of range");
        out[c] = D.at(m, c);
    }
    const bool ng = node(docked).needs_grad || node(probs).needs_grad;
    return {make_node(std::move(out), ng,
                      [pd = docked.id, pp = probs.id, chosen = std::move(chosen),
                       straight_through](Tape& t, int32_t self) {
                          const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                          const Tensor& D = t.nodes_[static_cast<size_t>(pd)].val;
                          const int64_t M = D.rows(), C = D.cols();
                          if (t.wants_grad(pd)) {
                              Tensor& gd = t.grad_buf(pd);
                              for (int64_t c = 0; c < C; ++c)
                                  gd.at(chosen[static_cast<size_t>(c)], c) += g[c];
                          }
                          if (straight_through && t.wants_grad(pp)) {
                              Tensor& gp = t.grad_buf(pp);
                              for (int64_t c = 0; c < C; ++c)
                                  for (int64_t m = 0; m < M; ++m) gp.at(m, c) += g[c] * D.at(m, c);
                          }
                      })};
}

}  // namespace malefic::diff
