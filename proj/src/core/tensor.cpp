#include "core/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "util/error.hpp"

namespace acwm::core {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

bool buffer_all_finite(const float* p, int64_t n) {
    // Exponent bits all set means inf or nan; bit test vectorizes.
    uint32_t bad = 0;
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, p + i, 4);
        bad |= static_cast<uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
    }
    return bad == 0;
}

std::vector<float>& TensorNode::ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0f);
    return grad;
}

namespace {

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<float> values, bool requires_grad) {
    ACWM_CHECK(!shape.empty(), invalid_argument, "tensor shape must be non-empty");
    for (int64_t d : shape)
        ACWM_CHECK(d > 0, invalid_argument, "tensor extents must be positive, got " + shape_str(shape));
    ACWM_CHECK(shape_numel(shape) == static_cast<int64_t>(values.size()), invalid_argument,
               "data length does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

thread_local bool g_grad_enabled = true;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<float> v(static_cast<size_t>(shape_numel(shape)), 0.0f);
    return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    std::vector<float> v(static_cast<size_t>(shape_numel(shape)), value);
    return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> values, bool requires_grad) {
    return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int64_t Tensor::dim(int i) const {
    const Shape& s = shape();
    ACWM_CHECK(i >= 0 && i < static_cast<int>(s.size()), invalid_argument, "dim index out of range");
    return s[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->numel();
}

float* Tensor::data() const { return values().data(); }

std::vector<float>& Tensor::values() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->values;
}

float Tensor::item() const {
    ACWM_CHECK(numel() == 1, invalid_argument, "item() requires a single-element tensor");
    return values()[0];
}

bool Tensor::requires_grad() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->requires_grad;
}

void Tensor::set_requires_grad(bool rg) {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    ACWM_CHECK(!is_op_output(), state, "requires_grad can only be toggled on leaf tensors");
    p_->requires_grad = rg;
}

std::vector<float>& Tensor::grad() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->ensure_grad();
}

const std::vector<float>* Tensor::grad_if_present() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return p_->grad.empty() ? nullptr : &p_->grad;
}

void Tensor::zero_grad() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), 0.0f);
}

void Tensor::drop_grad() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    p_->grad.clear();
    p_->grad.shrink_to_fit();
}

bool Tensor::is_op_output() const {
    ACWM_CHECK(p_, state, "use of undefined tensor");
    return !p_->parents.empty() || p_->consumed;
}

bool Tensor::all_finite() const { return buffer_all_finite(data(), numel()); }

Tensor Tensor::detached_clone() const {
    return from_data(shape(), values(), false);
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor make_op(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward) {
    bool track = false;
    if (g_grad_enabled) {
        for (const Tensor& p : parents)
            if (p.defined() && p.requires_grad()) track = true;
    }
    auto node = new_node(std::move(shape), std::move(values), track);
    if (track) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward);
    }
    return Tensor(node);
}

namespace {

// Iterative post-order over grad-requiring parents. Holds owning handles:
// the sweep detaches each node's parents after its closure runs, which could
// otherwise destroy nodes still queued here.
void topo_collect(const Tensor& root, std::vector<Tensor>& order) {
    std::unordered_set<const TensorNode*> visited;
    std::vector<std::pair<Tensor, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        Tensor node = stack.back().first;  // copy survives stack growth
        const size_t idx = stack.back().second;
        const auto& parents = node.node()->parents;
        if (idx < parents.size()) {
            ++stack.back().second;
            const Tensor& parent = parents[idx];
            if (parent.defined() && parent.node()->requires_grad &&
                !visited.count(parent.node())) {
                visited.insert(parent.node());
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Tensor& output, const std::vector<float>& seed_grad) {
    ACWM_CHECK(output.defined(), state, "backward on undefined tensor");
    TensorNode* root = output.node();
    ACWM_CHECK(root->requires_grad, state, "backward on a tensor with no recorded graph");
    ACWM_CHECK(!root->consumed, state, "backward on a graph already consumed");
    ACWM_CHECK(static_cast<int64_t>(seed_grad.size()) == root->numel(), invalid_argument,
               "seed gradient shape mismatch");

    std::vector<Tensor> order;
    topo_collect(output, order);
    for (const Tensor& t : order)
        ACWM_CHECK(!t.node()->consumed, state, "backward on a graph already consumed");

    {
        auto& g = root->ensure_grad();
        for (size_t i = 0; i < seed_grad.size(); ++i) g[i] += seed_grad[i];
    }

    // order is post-order (leaves first); run closures from the root down.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = it->node();
        if (n->backward_fn) {
            ACWM_CHECK(buffer_all_finite(n->grad.data(), static_cast<int64_t>(n->grad.size())),
                       numeric, "non-finite gradient detected during backward");
            n->backward_fn(*n);
            n->backward_fn = nullptr;
            n->parents.clear();
            n->consumed = true;
            // Intermediate grads are no longer needed once propagated.
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

void backward(const Tensor& output) {
    ACWM_CHECK(output.numel() == 1, invalid_argument, "default backward requires a scalar output");
    backward(output, {1.0f});
}

}  // namespace acwm::core
