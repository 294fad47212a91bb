// SPDX-License-Identifier: Apache-2.0
#include "polyscore/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace polyscore::ad {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ShapeMismatch(op, a, b);
}

}  // namespace

Tensor Tensor::from(std::size_t r, std::size_t c, std::vector<double> values) {
    if (values.size() != r * c) throw ShapeMismatch("tensor data size does not match " + std::to_string(r) + "x" + std::to_string(c));
    Tensor t;
    t.rows = r;
    t.cols = c;
    t.data = std::move(values);
    return t;
}

Tensor Tensor::column(std::vector<double> values) {
    std::size_t n = values.size();
    return from(n, 1, std::move(values));
}

std::string Tensor::shape_string() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

ShapeMismatch::ShapeMismatch(const std::string& op, const Tensor& a, const Tensor& b)
    : std::invalid_argument(op + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string()) {}

// Params ----------------------------------------------------------------------------

Param& ParamSet::add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Tensor(rows, cols);
    p->grad = Tensor(rows, cols);
    Param& ref = *p;
    by_name_[name] = p.get();
    params_.push_back(std::move(p));
    return ref;
}

Param* ParamSet::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamSet::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

Param& ParamSet::at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named " + name);
}

const Param& ParamSet::at(const std::string& name) const {
    if (const auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named " + name);
}

std::vector<Param*> ParamSet::all() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> ParamSet::all() const {
    std::vector<const Param*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void init_uniform(Param& p, std::size_t fan_in, Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (auto& v : p.value.data) v = rng.uniform(-a, a);
}

// Graph --------------------------------------------------------------------------------

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    Node n;
    n.own = std::move(value);
    return push(std::move(n));
}

Var Graph::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.needs_grad = record_;
    Var v = push(std::move(n));
    param_nodes_[&p] = v.id;
    return v;
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    if (record_) {
        for (const Var& v : inputs) n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
        if (n.needs_grad) n.fn = std::move(fn);
    }
    return push(std::move(n));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    if (record_) {
        for (const Var& v : inputs) n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
        if (n.needs_grad) n.fn = std::move(fn);
    }
    return push(std::move(n));
}

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.own;
}

Tensor& Graph::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) {
        const Tensor& v = value(id);
        n.grad = Tensor(v.rows, v.cols);
    }
    return n.grad;
}

void Graph::backward(Var loss, double seed) {
    if (used_) throw GraphReuse();
    used_ = true;
    if (loss.graph != this) throw std::invalid_argument("loss belongs to another graph");
    if (value(loss.id).size() != 1) throw ShapeMismatch("backward needs a scalar loss, got " + value(loss.id).shape_string());
    if (!record_) return;
    grad(loss.id).data[0] += seed;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.data.empty()) continue;
        if (n.fn) n.fn(*this, id);
        if (n.param) {
            auto& dst = n.param->grad.data;
            const auto& src = n.grad.data;
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
        }
    }
}

// Ops -----------------------------------------------------------------------------------

namespace {

Graph& graph_of(Var a) {
    if (!a.graph) throw std::invalid_argument("variable is not attached to a graph");
    return *a.graph;
}

void check_same_graph(Var a, Var b) {
    if (a.graph != b.graph) throw std::invalid_argument("variables belong to different graphs");
}

// C += A * B (A: n x k, B: k x m)
void gemm_acc(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* c = C + i * m;
        const double* a = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            if (av == 0.0) continue;
            const double* b = B + p * m;
            for (std::size_t j = 0; j < m; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    check_same_graph(a, b);
    Graph& g = graph_of(a);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.cols != B.rows) throw ShapeMismatch("matmul", A, B);
    Tensor C(A.rows, B.cols);
    gemm_acc(A.data.data(), B.data.data(), C.data.data(), A.rows, A.cols, B.cols);
    const std::size_t ia = a.id, ib = b.id;
    return g.record(std::move(C), {a, b}, [ia, ib](Graph& g, std::size_t self) {
        const Tensor& dC = g.grad(self);
        const Tensor& A = g.value(ia);
        const Tensor& B = g.value(ib);
        const std::size_t n = A.rows, k = A.cols, m = B.cols;
        if (g.needs_grad(ia)) {
            Tensor& dA = g.grad(ia);
            // dA = dC * B^T
            for (std::size_t i = 0; i < n; ++i) {
                const double* dc = &dC.data[i * m];
                double* da = &dA.data[i * k];
                for (std::size_t p = 0; p < k; ++p) {
                    const double* bb = &B.data[p * m];
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += dc[j] * bb[j];
                    da[p] += s;
                }
            }
        }
        if (g.needs_grad(ib)) {
            Tensor& dB = g.grad(ib);
            // dB = A^T * dC
            for (std::size_t i = 0; i < n; ++i) {
                const double* aa = &A.data[i * k];
                const double* dc = &dC.data[i * m];
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = aa[p];
                    if (av == 0.0) continue;
                    double* db = &dB.data[p * m];
                    for (std::size_t j = 0; j < m; ++j) db[j] += av * dc[j];
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    check_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_same("add", A, B);
    Tensor C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
    const std::size_t ia = a.id, ib = b.id;
    return graph_of(a).record(std::move(C), {a, b}, [ia, ib](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        for (std::size_t in : {ia, ib}) {
            if (!g.needs_grad(in)) continue;
            auto& dst = g.grad(in).data;
            for (std::size_t i = 0; i < d.size(); ++i) dst[i] += d[i];
        }
    });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var add_bias(Var x, Var b) {
    check_same_graph(x, b);
    const Tensor& X = x.value();
    const Tensor& B = b.value();
    if (B.cols != 1 || B.rows != X.rows) throw ShapeMismatch("add_bias", X, B);
    Tensor Y = X;
    for (std::size_t r = 0; r < Y.rows; ++r)
        for (std::size_t c = 0; c < Y.cols; ++c) Y(r, c) += B.data[r];
    const std::size_t ix = x.id, ib = b.id;
    return graph_of(x).record(std::move(Y), {x, b}, [ix, ib](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        if (g.needs_grad(ix)) {
            auto& dx = g.grad(ix).data;
            for (std::size_t i = 0; i < d.data.size(); ++i) dx[i] += d.data[i];
        }
        if (g.needs_grad(ib)) {
            auto& db = g.grad(ib).data;
            for (std::size_t r = 0; r < d.rows; ++r)
                for (std::size_t c = 0; c < d.cols; ++c) db[r] += d(r, c);
        }
    });
}

Var hadamard(Var a, Var b) {
    check_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_same("hadamard", A, B);
    Tensor C = A;
    for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
    const std::size_t ia = a.id, ib = b.id;
    return graph_of(a).record(std::move(C), {a, b}, [ia, ib](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        if (g.needs_grad(ia)) {
            auto& da = g.grad(ia).data;
            const auto& bv = g.value(ib).data;
            for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * bv[i];
        }
        if (g.needs_grad(ib)) {
            auto& db = g.grad(ib).data;
            const auto& av = g.value(ia).data;
            for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * av[i];
        }
    });
}

Var scale(Var x, double s) {
    Tensor Y = x.value();
    for (auto& v : Y.data) v *= s;
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix, s](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        auto& dx = g.grad(ix).data;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += s * d[i];
    });
}

Var tanh(Var x) {
    Tensor Y = x.value();
    for (auto& v : Y.data) v = std::tanh(v);
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        const auto& y = g.value(self).data;
        auto& dx = g.grad(ix).data;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * (1.0 - y[i] * y[i]);
    });
}

double sigmoid_value(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Var sigmoid(Var x) {
    Tensor Y = x.value();
    for (auto& v : Y.data) v = sigmoid_value(v);
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        const auto& y = g.value(self).data;
        auto& dx = g.grad(ix).data;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * y[i] * (1.0 - y[i]);
    });
}

Var sum(Var x) {
    const auto& v = x.value().data;
    Tensor Y(1, 1, std::accumulate(v.begin(), v.end(), 0.0));
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix](Graph& g, std::size_t self) {
        const double d = g.grad(self).data[0];
        for (auto& v : g.grad(ix).data) v += d;
    });
}

Var transpose(Var x) {
    const Tensor& X = x.value();
    Tensor Y(X.cols, X.rows);
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t c = 0; c < X.cols; ++c) Y(c, r) = X(r, c);
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        Tensor& dx = g.grad(ix);
        for (std::size_t r = 0; r < dx.rows; ++r)
            for (std::size_t c = 0; c < dx.cols; ++c) dx(r, c) += d(c, r);
    });
}

Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows of nothing");
    const std::size_t cols = xs[0].cols();
    std::size_t rows = 0;
    for (const auto& x : xs) {
        check_same_graph(xs[0], x);
        if (x.cols() != cols) throw ShapeMismatch("concat_rows", xs[0].value(), x.value());
        rows += x.rows();
    }
    Tensor Y(rows, cols);
    std::size_t off = 0;
    std::vector<std::size_t> ids;
    for (const auto& x : xs) {
        const auto& v = x.value().data;
        std::copy(v.begin(), v.end(), Y.data.begin() + static_cast<std::ptrdiff_t>(off * cols));
        off += x.rows();
        ids.push_back(x.id);
    }
    return graph_of(xs[0]).record(std::move(Y), xs, [ids](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        std::size_t off = 0;
        for (std::size_t id : ids) {
            const std::size_t n = g.value(id).size();
            if (g.needs_grad(id)) {
                auto& dx = g.grad(id).data;
                for (std::size_t i = 0; i < n; ++i) dx[i] += d.data[off + i];
            }
            off += n;
        }
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols of nothing");
    const std::size_t rows = xs[0].rows();
    std::size_t cols = 0;
    for (const auto& x : xs) {
        check_same_graph(xs[0], x);
        if (x.rows() != rows) throw ShapeMismatch("concat_cols", xs[0].value(), x.value());
        cols += x.cols();
    }
    Tensor Y(rows, cols);
    std::size_t off = 0;
    std::vector<std::size_t> ids;
    for (const auto& x : xs) {
        const Tensor& X = x.value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < X.cols; ++c) Y(r, off + c) = X(r, c);
        off += X.cols;
        ids.push_back(x.id);
    }
    return graph_of(xs[0]).record(std::move(Y), xs, [ids](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        std::size_t off = 0;
        for (std::size_t id : ids) {
            const std::size_t c = g.value(id).cols;
            if (g.needs_grad(id)) {
                Tensor& dx = g.grad(id);
                for (std::size_t r = 0; r < dx.rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) dx(r, j) += d(r, off + j);
            }
            off += c;
        }
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Tensor& X = x.value();
    if (begin + count > X.rows) throw ShapeMismatch("slice_rows past the end of " + X.shape_string());
    Tensor Y(count, X.cols);
    std::copy(X.data.begin() + static_cast<std::ptrdiff_t>(begin * X.cols),
              X.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * X.cols), Y.data.begin());
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix, begin](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        Tensor& dx = g.grad(ix);
        for (std::size_t i = 0; i < d.size(); ++i) dx.data[begin * dx.cols + i] += d[i];
    });
}

Var sorted_sum(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("sorted_sum of nothing");
    const Tensor& first = xs[0].value();
    for (const auto& x : xs) {
        check_same_graph(xs[0], x);
        require_same("sorted_sum", first, x.value());
    }
    Tensor Y(first.rows, first.cols);
    std::vector<double> terms(xs.size());
    for (std::size_t i = 0; i < Y.data.size(); ++i) {
        for (std::size_t k = 0; k < xs.size(); ++k) terms[k] = xs[k].value().data[i];
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double t : terms) s += t;
        Y.data[i] = s;
    }
    std::vector<std::size_t> ids;
    for (const auto& x : xs) ids.push_back(x.id);
    return graph_of(xs[0]).record(std::move(Y), xs, [ids](Graph& g, std::size_t self) {
        const auto& d = g.grad(self).data;
        for (std::size_t id : ids) {
            if (!g.needs_grad(id)) continue;
            auto& dx = g.grad(id).data;
            for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
        }
    });
}

Var sparse_project(Var table, const SparseCols& cols) {
    const Tensor& E = table.value();
    if (cols.rows != E.rows) {
        throw ShapeMismatch("sparse_project: table " + E.shape_string() + " vs sparse rows " + std::to_string(cols.rows));
    }
    const std::size_t out = E.cols, n = cols.cols();
    Tensor Y(out, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::uint32_t q = cols.start[j]; q < cols.start[j + 1]; ++q) {
            const double w = cols.weight[q];
            const double* e = &E.data[cols.index[q] * out];
            for (std::size_t o = 0; o < out; ++o) Y.data[o * n + j] += w * e[o];
        }
    const std::size_t it = table.id;
    return graph_of(table).record(std::move(Y), {table}, [it, cols](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        Tensor& dE = g.grad(it);
        const std::size_t out = dE.cols, n = d.cols;
        for (std::size_t j = 0; j < n; ++j)
            for (std::uint32_t q = cols.start[j]; q < cols.start[j + 1]; ++q) {
                const double w = cols.weight[q];
                double* e = &dE.data[cols.index[q] * out];
                for (std::size_t o = 0; o < out; ++o) e[o] += w * d.data[o * n + j];
            }
    });
}

Var fold_time(Var x, std::size_t T) {
    const Tensor& X = x.value();
    if (T == 0 || X.cols % T != 0) throw ShapeMismatch("fold_time: " + X.shape_string() + " not divisible into " + std::to_string(T) + " steps");
    const std::size_t C = X.rows, M = X.cols / T;
    Tensor Y(T * C, M);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < M; ++m) Y((t * C + c), m) = X(c, t * M + m);
    const std::size_t ix = x.id;
    return graph_of(x).record(std::move(Y), {x}, [ix, T, C, M](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        Tensor& dx = g.grad(ix);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t m = 0; m < M; ++m) dx(c, t * M + m) += d(t * C + c, m);
    });
}

Var conv1d(Var x, Var kernel, std::size_t T) {
    check_same_graph(x, kernel);
    const Tensor& X = x.value();
    const Tensor& K = kernel.value();
    if (T == 0 || X.cols % T != 0) throw ShapeMismatch("conv1d: input " + X.shape_string() + " not divisible into " + std::to_string(T) + " steps");
    const std::size_t Cin = X.rows, M = X.cols / T, Cout = K.rows;
    if (Cin == 0 || K.cols % Cin != 0) throw ShapeMismatch("conv1d", X, K);
    const std::size_t width = K.cols / Cin;
    const long half = static_cast<long>(width / 2);
    Tensor Y(Cout, T * M);
    for (std::size_t o = 0; o < Cout; ++o)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t s = 0; s < width; ++s) {
                const long tt = static_cast<long>(t) + static_cast<long>(s) - half;
                if (tt < 0 || tt >= static_cast<long>(T)) continue;
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double k = K(o, s * Cin + c);
                    if (k == 0.0) continue;
                    const double* xr = &X.data[c * X.cols + static_cast<std::size_t>(tt) * M];
                    double* yr = &Y.data[o * Y.cols + t * M];
                    for (std::size_t m = 0; m < M; ++m) yr[m] += k * xr[m];
                }
            }
    const std::size_t ix = x.id, ik = kernel.id;
    return graph_of(x).record(std::move(Y), {x, kernel}, [ix, ik, T, M, Cin, Cout, width, half](Graph& g, std::size_t self) {
        const Tensor& d = g.grad(self);
        const Tensor& X = g.value(ix);
        const Tensor& K = g.value(ik);
        const bool gx = g.needs_grad(ix), gk = g.needs_grad(ik);
        Tensor* dX = gx ? &g.grad(ix) : nullptr;
        Tensor* dK = gk ? &g.grad(ik) : nullptr;
        for (std::size_t o = 0; o < Cout; ++o)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t s = 0; s < width; ++s) {
                    const long tt = static_cast<long>(t) + static_cast<long>(s) - half;
                    if (tt < 0 || tt >= static_cast<long>(T)) continue;
                    const double* dr = &d.data[o * d.cols + t * M];
                    for (std::size_t c = 0; c < Cin; ++c) {
                        const std::size_t xoff = c * X.cols + static_cast<std::size_t>(tt) * M;
                        if (gk) {
                            double acc = 0.0;
                            for (std::size_t m = 0; m < M; ++m) acc += dr[m] * X.data[xoff + m];
                            (*dK)(o, s * Cin + c) += acc;
                        }
                        if (gx) {
                            const double k = K(o, s * Cin + c);
                            for (std::size_t m = 0; m < M; ++m) dX->data[xoff + m] += k * dr[m];
                        }
                    }
                }
    });
}

std::vector<double> softmax(const Tensor& logits, double temperature) {
    std::vector<double> p(logits.data.size());
    if (p.empty()) return p;
    const double inv = 1.0 / temperature;
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp((logits.data[i] - mx) * inv));
    for (auto& v : p) v /= z;
    return p;
}

Var softmax_ce_bits(Var logits, std::size_t target) {
    const Tensor& Z = logits.value();
    if (Z.cols != 1 || target >= Z.rows) {
        throw ShapeMismatch("softmax_ce_bits: logits " + Z.shape_string() + ", target " + std::to_string(target));
    }
    const double mx = *std::max_element(Z.data.begin(), Z.data.end());
    double s = 0.0;
    for (double v : Z.data) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    Tensor Y(1, 1, (lse - Z.data[target]) / kLn2);
    const std::size_t iz = logits.id;
    return graph_of(logits).record(std::move(Y), {logits}, [iz, target, lse](Graph& g, std::size_t self) {
        const double d = g.grad(self).data[0] / kLn2;
        const auto& z = g.value(iz).data;
        auto& dz = g.grad(iz).data;
        for (std::size_t i = 0; i < z.size(); ++i) dz[i] += d * (std::exp(z[i] - lse) - (i == target ? 1.0 : 0.0));
    });
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double bce_bits(double z, bool y) { return (y ? softplus(-z) : softplus(z)) / kLn2; }

Var sigmoid_bce_bits(Var logits, const std::vector<double>& targets) {
    const Tensor& Z = logits.value();
    if (targets.size() != Z.size()) {
        throw ShapeMismatch("sigmoid_bce_bits: logits " + Z.shape_string() + ", targets " + std::to_string(targets.size()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < Z.size(); ++i) {
        const double z = Z.data[i];
        const double t = targets[i];
        total += t * softplus(-z) + (1.0 - t) * softplus(z);
    }
    Tensor Y(1, 1, total / kLn2);
    const std::size_t iz = logits.id;
    return graph_of(logits).record(std::move(Y), {logits}, [iz, targets](Graph& g, std::size_t self) {
        const double d = g.grad(self).data[0] / kLn2;
        const auto& z = g.value(iz).data;
        auto& dz = g.grad(iz).data;
        for (std::size_t i = 0; i < z.size(); ++i) dz[i] += d * (sigmoid_value(z[i]) - targets[i]);
    });
}

// Optimizers ---------------------------------------------------------------------------

void Optimizer::step(ParamSet& params) {
    ++steps_;
    double scale_factor = 1.0;
    if (config_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto* p : params.all())
            for (double v : p->grad.data) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > config_.clip_norm) scale_factor = config_.clip_norm / norm;
    }
    for (auto* p : params.all()) {
        auto& w = p->value.data;
        auto& gr = p->grad.data;
        if (config_.kind == OptimizerConfig::Kind::sgd) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config_.learning_rate * scale_factor * gr[i];
        } else {
            auto it = moments_.find(p->name);
            if (it == moments_.end()) {
                it = moments_.emplace(p->name, std::make_pair(Tensor(p->value.rows, p->value.cols),
                                                               Tensor(p->value.rows, p->value.cols))).first;
            }
            auto& m = it->second.first.data;
            auto& v = it->second.second.data;
            const double b1 = config_.beta1, b2 = config_.beta2;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = gr[i] * scale_factor;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                const double mh = m[i] / c1;
                const double vh = v[i] / c2;
                w[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
            }
        }
        std::fill(gr.begin(), gr.end(), 0.0);
    }
}

// Gradient check ------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Var(Graph&)>& forward, ParamSet& params,
                           const GradCheckOptions& options) {
    params.zero_grad();
    {
        Graph g(true);
        Var loss = forward(g);
        g.backward(loss);
    }
    auto eval = [&]() {
        Graph g(false);
        return forward(g).value().data.at(0);
    };
    Rng rng(options.seed);
    GradCheckReport report;
    report.pass = true;
    for (auto* p : params.all()) {
        GradCheckEntry entry;
        entry.name = p->name;
        std::vector<std::size_t> idx(p->value.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (options.max_entries_per_param > 0 && idx.size() > options.max_entries_per_param) {
            for (std::size_t i = 0; i < options.max_entries_per_param; ++i) {
                std::size_t j = i + static_cast<std::size_t>(rng.next() % (idx.size() - i));
                std::swap(idx[i], idx[j]);
            }
            idx.resize(options.max_entries_per_param);
        }
        for (std::size_t i : idx) {
            const double orig = p->value.data[i];
            p->value.data[i] = orig + options.h;
            const double fp = eval();
            p->value.data[i] = orig - options.h;
            const double fm = eval();
            p->value.data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * options.h);
            const double analytic = p->grad.data[i];
            double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), options.floor});
            if (!std::isfinite(analytic) || !std::isfinite(numeric)) rel = INFINITY;
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
            ++entry.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.params.push_back(entry);
    }
    report.pass = report.max_rel_error <= options.tolerance;
    params.zero_grad();
    return report;
}

}  // namespace polyscore::ad
