#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace acwm::core {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool buffer_all_finite(const float* p, int64_t n);

struct TensorNode;

// Value-semantic handle onto a float32 buffer plus (optionally) the reverse-mode
// tape that produced it. Copies share storage. A node created by an op while
// grad mode is on and any input requires grad carries a backward closure and
// keeps its parents alive; backward() consumes that closure.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return p_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int64_t dim(int i) const;
    int64_t numel() const;

    // A Tensor is a shared handle: const applies to the handle, not the
    // buffer, so accessors are const-qualified and return mutable views.
    float* data() const;
    std::vector<float>& values() const;
    float item() const;

    bool requires_grad() const;
    void set_requires_grad(bool rg);

    // Grad buffer, allocated (zeroed) on first access.
    std::vector<float>& grad() const;
    const std::vector<float>* grad_if_present() const;
    void zero_grad() const;
    void drop_grad() const;

    bool is_op_output() const;
    bool all_finite() const;

    // Deep copy of the value buffer only (no graph, no grad).
    Tensor detached_clone() const;

    TensorNode* node() const { return p_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorNode> p) : p_(std::move(p)) {}
    friend Tensor make_op(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
                          std::function<void(TensorNode&)> backward);

    std::shared_ptr<TensorNode> p_;
};

struct TensorNode {
    Shape shape;
    std::vector<float> values;
    bool requires_grad = false;
    std::vector<float> grad;  // empty means absent

    // Set only on op outputs participating in a live graph.
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;
    bool consumed = false;  // backward already ran through this node

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    std::vector<float>& ensure_grad();
};

// Thread-local autograd recording switch.
bool grad_enabled();
void set_grad_enabled(bool on);

class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Builds an op-output tensor. Records the tape edge when grad mode is on and
// some parent requires grad; otherwise returns a plain tensor. The backward
// closure must accumulate (+=) into each parent's grad buffer.
Tensor make_op(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward);

// Reverse-mode sweep from `output` seeded with `seed_grad` (same shape).
// Each reachable node's closure runs exactly once, in reverse topological
// order; the subgraph is consumed afterwards and a second sweep through any
// of its nodes raises a state error. Leaf grads accumulate additively.
void backward(const Tensor& output, const std::vector<float>& seed_grad);
// Scalar convenience: seed = 1.
void backward(const Tensor& output);

}  // namespace acwm::core
