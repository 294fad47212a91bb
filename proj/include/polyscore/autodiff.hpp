// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <deque>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace polyscore::ad {

/// Dense row-major matrix of doubles; column vectors are K x 1.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    static Tensor from(std::size_t r, std::size_t c, std::vector<double> values);
    static Tensor column(std::vector<double> values);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] std::vector<std::size_t> shape() const { return {rows, cols}; }
    [[nodiscard]] std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

class ShapeMismatch : public std::invalid_argument {
public:
    ShapeMismatch(const std::string& op, const Tensor& a, const Tensor& b);
    explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

class GraphReuse : public std::logic_error {
public:
    GraphReuse() : std::logic_error("backward called twice on one recorded graph") {}
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Named parameters in insertion order.
class ParamSet {
public:
    Param& add(const std::string& name, std::size_t rows, std::size_t cols);
    [[nodiscard]] Param* find(const std::string& name);
    [[nodiscard]] const Param* find(const std::string& name) const;
    Param& at(const std::string& name);
    [[nodiscard]] const Param& at(const std::string& name) const;
    [[nodiscard]] std::vector<Param*> all();
    [[nodiscard]] std::vector<const Param*> all() const;
    [[nodiscard]] std::size_t scalar_count() const;
    [[nodiscard]] std::size_t size() const { return params_.size(); }
    void zero_grad();

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, Param*> by_name_;
};

/// Deterministic generator whose uniform draws do not depend on the standard
/// library's distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t next() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_uniform(Param& p, std::size_t fan_in, Rng& rng);

// Computation graph --------------------------------------------------------------

class Graph;

struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] std::size_t rows() const { return value().rows; }
    [[nodiscard]] std::size_t cols() const { return value().cols; }
};

/// Compressed sparse columns: column j holds (index, weight) pairs.
struct SparseCols {
    std::size_t rows = 0;
    std::vector<std::uint32_t> start{0};
    std::vector<std::uint32_t> index;
    std::vector<double> weight;

    [[nodiscard]] std::size_t cols() const { return start.size() - 1; }
    void push(std::uint32_t i, double w = 1.0) {
        index.push_back(i);
        weight.push_back(w);
    }
    void end_column() { start.push_back(static_cast<std::uint32_t>(index.size())); }
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    /// A graph built with record = false computes values only.
    explicit Graph(bool record = true) : record_(record) {}

    Var constant(Tensor value);
    /// Leaf bound to a parameter; one node per parameter per graph.
    Var param(Param& p);
    /// Adds a node computed from `inputs`; `fn` adds the node's gradient into
    /// its inputs' gradients.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

    [[nodiscard]] const Tensor& value(std::size_t id) const;
    /// Gradient buffer of a node, allocated on first use.
    Tensor& grad(std::size_t id);
    [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    [[nodiscard]] bool recording() const { return record_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Back-propagates seed * d(loss) into every reachable parameter's grad.
    void backward(Var loss, double seed = 1.0);

private:
    struct Node {
        Tensor own;
        const Tensor* ref = nullptr;
        Tensor grad;
        BackwardFn fn;
        Param* param = nullptr;
        bool needs_grad = false;
    };
    Var push(Node node);

    bool record_;
    bool used_ = false;
    std::deque<Node> nodes_;  // deque: references stay valid as nodes are added
    std::map<const Param*, std::size_t> param_nodes_;
};

// Ops ------------------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x (r x c) plus column bias b (r x 1) broadcast over columns.
Var add_bias(Var x, Var b);
Var hadamard(Var a, Var b);
Var scale(Var x, double s);
Var tanh(Var x);
Var sigmoid(Var x);
/// Sum of all entries, 1 x 1.
Var sum(Var x);
Var transpose(Var x);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
/// Elementwise sum whose terms are added in ascending value order, so the
/// result does not depend on the order of `xs`.
Var sorted_sum(const std::vector<Var>& xs);
/// result(:, j) = sum over (i, w) in column j of w * table(i, :)^T.
Var sparse_project(Var table, const SparseCols& cols);
/// Time-major layout change: C x (T*M) -> (T*C) x M.
Var fold_time(Var x, std::size_t T);
/// Same-padded cross-correlation along time. x is C_in x (T*M) with column
/// t*M + m; kernel is C_out x (width*C_in) with column s*C_in + c applied to
/// time t + s - width/2.
Var conv1d(Var x, Var kernel, std::size_t T);
/// Cross-entropy in bits of a softmax over a K x 1 logit column.
Var softmax_ce_bits(Var logits, std::size_t target);
/// Summed binary cross-entropy in bits; targets has one entry per logit.
Var sigmoid_bce_bits(Var logits, const std::vector<double>& targets);

/// Column softmax of a K x 1 tensor (values only).
std::vector<double> softmax(const Tensor& logits, double temperature = 1.0);
double sigmoid_value(double z);
/// -log2 sigmoid(z) for y = 1, -log2(1 - sigmoid(z)) for y = 0, stable.
double bce_bits(double z, bool y);

// Optimizers ------------------------------------------------------------------------

struct OptimizerConfig {
    enum class Kind { sgd, adam };
    Kind kind = Kind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0;  // global L2 max-norm; 0 disables
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}
    /// Applies one update from the accumulated grads, then zeroes them.
    void step(ParamSet& params);
    [[nodiscard]] std::size_t steps() const { return steps_; }
    [[nodiscard]] const OptimizerConfig& config() const { return config_; }

private:
    OptimizerConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

// Gradient checking -------------------------------------------------------------------

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    // |a - n| / max(|a|, |n|, floor): keeps round-off on vanishing
    // gradients from reading as relative error.
    double floor = 1e-6;
    std::size_t max_entries_per_param = 0;  // 0 = every entry
    std::uint64_t seed = 1;
};

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_error = 0.0;
    bool pass = false;
};

/// `forward` records a scalar loss on the graph it is handed.
GradCheckReport grad_check(const std::function<Var(Graph&)>& forward, ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace polyscore::ad
