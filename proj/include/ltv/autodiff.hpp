#pragma once

#include <functional>
#include <limits>
#include <memory>

#include "ltv/tensor.hpp"

namespace ltv {

class Tape;

// A value plus its position on a recording tape. Vars not bound to a tape are
// plain constants; ops on constants evaluate eagerly and record nothing.
struct Var {
    std::shared_ptr<const Tensor> val;
    Tape* tape = nullptr;
    size_t id = npos;

    static constexpr size_t npos = std::numeric_limits<size_t>::max();

    Var() = default;
    explicit Var(Tensor t) : val(std::make_shared<const Tensor>(std::move(t))) {}
    Var(std::shared_ptr<const Tensor> v, Tape* tp, size_t node) : val(std::move(v)), tape(tp), id(node) {}

    const Tensor& value() const { return *val; }
    const Shape& shape() const { return val->shape(); }
    bool recorded() const { return tape != nullptr; }
    bool requires_grad() const { return recorded(); }

    static Var constant(Tensor t) { return Var(std::move(t)); }
    static Var constant(double v) { return Var(Tensor::scalar(v)); }
};

// Reverse-mode tape. Records one op per node in insertion order; backward()
// walks the records in exact reverse order and accumulates gradients
// additively, so fan-out just works. A tape supports a single backward pass.
class Tape {
public:
    using BackwardFn = std::function<void(const Tensor& upstream, Tape& tape)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a gradient-tracked leaf.
    Var leaf(Tensor value) {
        auto p = std::make_shared<const Tensor>(std::move(value));
        const size_t id = push_node(p->shape(), nullptr);
        return Var(p, this, id);
    }

    size_t push_node(const Shape& out_shape, BackwardFn back) {
        nodes_.push_back(Node{out_shape, std::move(back)});
        return nodes_.size() - 1;
    }

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Accumulates `contribution` into the gradient slot of node `id`.
    void accumulate(size_t id, const Tensor& contribution) {
        Tensor& g = grad_slot(id);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += contribution[i];
    }

    // Direct access for backward closures that accumulate element-wise.
    Tensor& grad_slot(size_t id) {
        Tensor& g = grads_[id];
        if (g.numel() == 0) g = Tensor::zeros(nodes_[id].shape);
        return g;
    }

    bool has_grad(size_t id) const { return !grads_.empty() && grads_[id].numel() != 0; }

    // Reverse pass from a scalar root. The tape is consumed: a second call is
    // an error (retaining graphs is out of scope).
    void backward(const Var& root) {
        if (consumed_) throw numeric_error("Tape::backward: tape already consumed");
        if (!root.recorded() || root.tape != this)
            throw shape_error("Tape::backward: root is not recorded on this tape");
        if (root.value().numel() != 1)
            throw shape_error("Tape::backward: root must be scalar, got shape " +
                              shape_str(root.value().shape()));
        consumed_ = true;
        grads_.assign(nodes_.size(), Tensor{});
        grad_slot(root.id)[0] = 1.0;
        for (size_t i = nodes_.size(); i-- > 0;) {
            if (!has_grad(i)) continue;
            if (nodes_[i].back) nodes_[i].back(grads_[i], *this);
        }
    }

    // Gradient of a recorded Var after backward(); zero tensor if the node
    // never received a contribution.
    Tensor grad(const Var& v) const {
        if (!v.recorded() || v.tape != this)
            throw shape_error("Tape::grad: var is not recorded on this tape");
        if (!consumed_) throw numeric_error("Tape::grad: backward() has not run");
        if (has_grad(v.id)) return grads_[v.id];
        return Tensor::zeros(nodes_[v.id].shape);
    }

private:
    struct Node {
        Shape shape;
        BackwardFn back;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;
};

// Resolves the tape shared by a set of op inputs (nullptr when all inputs are
// constants); mixing tapes is an error.
inline Tape* common_tape(std::initializer_list<const Var*> inputs) {
    Tape* t = nullptr;
    for (const Var* v : inputs) {
        if (!v->recorded()) continue;
        if (t == nullptr)
            t = v->tape;
        else if (t != v->tape)
            throw shape_error("op inputs recorded on different tapes");
    }
    return t;
}

}  // namespace ltv
