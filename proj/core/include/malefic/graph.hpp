#pragma once

#include <deque>
#include <functional>
#include <unordered_map>

#include "malefic/params.hpp"
#include "malefic/tensor.hpp"

namespace malefic::diff {

// Handle into a Tape's node list.
struct Value {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation tape. Nodes are appended in topological order
// by construction, so the backward pass is a single reverse sweep. One tape
// instance is single-threaded; distinct tapes may run on distinct threads.
class Tape {
public:
    // Leaves.
    Value constant(Tensor t);             // no gradient tracked
    Value leaf(Tensor t);                 // gradient tracked (inputs under test)
    Value param(Parameter& p);            // cached per tape; backward() adds into p.grad

    // Primitives. Shapes are validated and reported in errors.
    Value add(Value a, Value b);          // same shape, or [RxC] + [C] broadcast over rows
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);          // elementwise, same broadcast rule as add
    Value scale(Value a, double s);
    Value add_n(const std::vector<Value>& xs);
    Value matmul(Value a, Value b);       // [mxk]@[kxn], [mxk]@[k], [k]@[kxn]
    Value matmul_tb(Value a, Value b);    // a @ b^T with a [mxk], b [nxk]
    Value leaky_relu(Value a, double negative_slope = 0.01);
    Value dropout(Value a, double p, bool training, Rng* rng);
    // Fixed-mask variant so finite differences see a deterministic function.
    Value dropout_with_mask(Value a, std::vector<uint8_t> keep, double p);
    Value softmax(Value a, int axis = 0);  // rank 1, or rank 2 along axis 0|1
    // Column-wise softmax over modalities with exact zeros on masked rows.
    Value masked_softmax_cols(Value a, std::vector<uint8_t> avail);
    Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
    Value conv1d(Value x, Value w, Value b);  // x [TxCin], w [CoutxCinxK] (K odd), b [Cout]
    Value mean_pool(Value x);                 // [TxC] -> [C]
    Value concat(const std::vector<Value>& xs);      // rank-1 pieces -> rank 1
    Value stack_rows(const std::vector<Value>& xs);  // M vectors [c] -> [Mxc]
    Value cross_entropy(Value logits, int label);    // [K] -> scalar
    // Hard per-dimension selection: out[d] = docked[chosen[d], d].
    // Backward sends grad only to the selected docked entries; when
    // straight_through is set, probs additionally receives
    // grad[d] * docked[m, d] as if the one-hot selection were probs.
    Value select_fuse(Value docked, Value probs, std::vector<int> chosen,
                      bool straight_through);

    const Tensor& value(Value v) const;
    Tensor grad(Value v) const;  // zeros if the node was never reached
    void backward(Value scalar_output);
    void reset();
    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;  // allocated on first touch
        bool needs_grad = false;
        bool touched = false;
        Parameter* bound = nullptr;
        std::function<void(Tape&, int32_t)> back;
    };

    int32_t make_node(Tensor val, bool needs_grad, std::function<void(Tape&, int32_t)> back);
    Node& node(Value v);
    const Node& node(Value v) const;
    Tensor& grad_buf(int32_t id);
    void accumulate(int32_t id, int64_t flat_index, double g);
    bool wants_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    std::deque<Node> nodes_;
    std::unordered_map<Parameter*, int32_t> param_nodes_;
    bool backward_done_ = false;
};

}  // namespace malefic::diff
