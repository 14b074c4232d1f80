#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdlgm/params.hpp"
#include "tdlgm/tensor.hpp"

namespace tdlgm {

// Reverse-mode engine: an append-only tape of eagerly evaluated nodes.
// Values are immutable once recorded; backward replays the tape in reverse.

enum class Prim {
    Const,
    Add,
    Sub,
    Mul,      // elementwise
    Matmul,   // (r,k)x(k,c) -> (r,c), or (r,k)x(k) -> (r)
    Scale,    // multiply by a non-trainable scalar
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    Sum,      // all elements -> scalar
    Mean,     // all elements -> scalar
    Concat,   // rank-1 inputs -> rank-1
    Slice,    // rank-1 [start, start+len)
};

inline const char* prim_name(Prim k) {
    switch (k) {
        case Prim::Const: return "const";
        case Prim::Add: return "add";
        case Prim::Sub: return "sub";
        case Prim::Mul: return "mul";
        case Prim::Matmul: return "matmul";
        case Prim::Scale: return "scale";
        case Prim::Sigmoid: return "sigmoid";
        case Prim::Tanh: return "tanh";
        case Prim::Exp: return "exp";
        case Prim::Log: return "log";
        case Prim::Square: return "square";
        case Prim::Sum: return "sum";
        case Prim::Mean: return "mean";
        case Prim::Concat: return "concat";
        case Prim::Slice: return "slice";
    }
    return "?";
}

class Tape;

// Lightweight handle to a node on a tape.
struct Value {
    Tape* tape = nullptr;
    int idx = -1;

    const Tensor& tensor() const;
    double scalar() const;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

// Parameter leaves bound onto a tape, keyed by name.
class BoundParams {
public:
    void insert(const std::string& name, Value v) { map_.emplace(name, v); }

    Value at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::invalid_argument("unbound param '" + name + "'");
        return it->second;
    }

private:
    std::unordered_map<std::string, Value> map_;
};

class Tape {
public:
    Value constant(Tensor t) { return record(Prim::Const, {}, std::move(t)); }

    Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    // Named leaf; gradients are collected per name in backward().
    Value param(const std::string& name, const Tensor& t) {
        if (named_.count(name))
            throw std::invalid_argument("param '" + name + "' already bound to this tape");
        Value v = record(Prim::Const, {}, t);
        named_[name] = v.idx;
        return v;
    }

    Value apply(Prim kind, const std::vector<Value>& inputs, double scalar = 0.0,
                std::size_t aux0 = 0, std::size_t aux1 = 0);

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value_of(int idx) const { return nodes_[idx].value; }

    GradientMap backward(const Value& root, const ParamSet& params) const {
        return backward(root, std::vector<const ParamSet*>{&params});
    }

    // Reverse accumulation from a scalar root. Parameters that the root does
    // not depend on get zero gradients of the parameter's shape.
    GradientMap backward(const Value& root, const std::vector<const ParamSet*>& sets) const;

private:
    struct Node {
        Tensor value;
        Prim kind;
        std::vector<int> parents;
        double scalar = 0.0;
        std::size_t aux0 = 0, aux1 = 0;
    };

    Value record(Prim kind, std::vector<int> parents, Tensor value, double scalar = 0.0,
                 std::size_t aux0 = 0, std::size_t aux1 = 0) {
        nodes_.push_back(Node{std::move(value), kind, std::move(parents), scalar, aux0, aux1});
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    static void accumulate(Tensor& dst, const Tensor& src) {
        if (dst.data.empty()) {
            dst = src;
            return;
        }
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    }

    void propagate(int i, std::vector<Tensor>& adj, std::vector<char>& touched) const;

    std::deque<Node> nodes_;  // stable references while the tape grows
    std::unordered_map<std::string, int> named_;
};

inline const Tensor& Value::tensor() const { return tape->value_of(idx); }

inline double Value::scalar() const {
    const Tensor& t = tensor();
    if (t.numel() != 1)
        throw std::invalid_argument("scalar() on tensor of shape " + t.shape_str());
    return t.data[0];
}

// ---------------------------------------------------------------------------
// forward evaluation

inline Value Tape::apply(Prim kind, const std::vector<Value>& inputs, double scalar,
                         std::size_t aux0, std::size_t aux1) {
    for (const Value& v : inputs)
        if (v.tape != this) throw std::invalid_argument("value from another tape");

    auto shape_err = [&](const std::string& detail) {
        return std::invalid_argument(std::string(prim_name(kind)) + ": " + detail);
    };
    auto unary = [&]() -> const Tensor& {
        if (inputs.size() != 1) throw shape_err("expects one input");
        return inputs[0].tensor();
    };
    auto binary_same = [&]() -> std::pair<const Tensor&, const Tensor&> {
        if (inputs.size() != 2) throw shape_err("expects two inputs");
        const Tensor& a = inputs[0].tensor();
        const Tensor& b = inputs[1].tensor();
        if (!a.same_shape(b))
            throw shape_err("shape mismatch " + a.shape_str() + " vs " + b.shape_str());
        return {a, b};
    };
    auto parent_ids = [&]() {
        std::vector<int> ids;
        ids.reserve(inputs.size());
        for (const Value& v : inputs) ids.push_back(v.idx);
        return ids;
    };

    switch (kind) {
        case Prim::Const:
            throw std::invalid_argument("const is not an applied primitive");

        case Prim::Add: {
            auto [a, b] = binary_same();
            Tensor out = a;
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Sub: {
            auto [a, b] = binary_same();
            Tensor out = a;
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Mul: {
            auto [a, b] = binary_same();
            Tensor out = a;
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Matmul: {
            if (inputs.size() != 2) throw shape_err("expects two inputs");
            const Tensor& a = inputs[0].tensor();
            const Tensor& b = inputs[1].tensor();
            if (a.shape.size() != 2)
                throw shape_err("left operand must be rank-2, got " + a.shape_str());
            const std::size_t r = a.shape[0], k = a.shape[1];
            if (b.shape.size() == 1) {
                if (b.shape[0] != k)
                    throw shape_err("inner dims " + a.shape_str() + " vs " + b.shape_str());
                Tensor out({r});
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < k; ++j) acc += a.data[i * k + j] * b.data[j];
                    out[i] = acc;
                }
                return record(kind, parent_ids(), std::move(out));
            }
            if (b.shape.size() == 2) {
                if (b.shape[0] != k)
                    throw shape_err("inner dims " + a.shape_str() + " vs " + b.shape_str());
                const std::size_t c = b.shape[1];
                Tensor out({r, c});
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < k; ++t)
                            acc += a.data[i * k + t] * b.data[t * c + j];
                        out.data[i * c + j] = acc;
                    }
                return record(kind, parent_ids(), std::move(out));
            }
            throw shape_err("right operand must be rank-1 or rank-2, got " + b.shape_str());
        }
        case Prim::Scale: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) v *= scalar;
            return record(kind, parent_ids(), std::move(out), scalar);
        }
        case Prim::Sigmoid: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Tanh: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) v = std::tanh(v);
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Exp: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) v = std::exp(v);
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Log: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) {
                if (v <= 0.0)
                    throw std::domain_error("log of non-positive value " + std::to_string(v));
                v = std::log(v);
            }
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Square: {
            const Tensor& a = unary();
            Tensor out = a;
            for (double& v : out.data) v = v * v;
            return record(kind, parent_ids(), std::move(out));
        }
        case Prim::Sum: {
            const Tensor& a = unary();
            double acc = 0.0;
            for (double v : a.data) acc += v;
            return record(kind, parent_ids(), Tensor::scalar(acc));
        }
        case Prim::Mean: {
            const Tensor& a = unary();
            if (a.numel() == 0) throw shape_err("mean of empty tensor");
            double acc = 0.0;
            for (double v : a.data) acc += v;
            return record(kind, parent_ids(), Tensor::scalar(acc / static_cast<double>(a.numel())));
        }
        case Prim::Concat: {
            if (inputs.empty()) throw shape_err("expects at least one input");
            std::vector<double> out;
            for (const Value& v : inputs) {
                const Tensor& t = v.tensor();
                if (t.shape.size() != 1)
                    throw shape_err("inputs must be rank-1, got " + t.shape_str());
                out.insert(out.end(), t.data.begin(), t.data.end());
            }
            return record(kind, parent_ids(), Tensor::vec(std::move(out)));
        }
        case Prim::Slice: {
            const Tensor& a = unary();
            if (a.shape.size() != 1)
                throw shape_err("input must be rank-1, got " + a.shape_str());
            if (aux1 == 0 || aux0 + aux1 > a.numel())
                throw shape_err("range [" + std::to_string(aux0) + ", " +
                                std::to_string(aux0 + aux1) + ") out of " + a.shape_str());
            Tensor out({aux1});
            for (std::size_t i = 0; i < aux1; ++i) out[i] = a[aux0 + i];
            return record(kind, parent_ids(), std::move(out), 0.0, aux0, aux1);
        }
    }
    throw std::invalid_argument("unknown primitive");
}

// ---------------------------------------------------------------------------
// backward rules

inline void Tape::propagate(int i, std::vector<Tensor>& adj, std::vector<char>& touched) const {
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    auto push = [&](int p, const Tensor& contrib) {
        accumulate(adj[p], contrib);
        touched[p] = 1;
    };

    switch (n.kind) {
        case Prim::Const:
            break;
        case Prim::Add:
            push(n.parents[0], g);
            push(n.parents[1], g);
            break;
        case Prim::Sub: {
            push(n.parents[0], g);
            Tensor neg = g;
            for (double& v : neg.data) v = -v;
            push(n.parents[1], neg);
            break;
        }
        case Prim::Mul: {
            const Tensor& a = nodes_[n.parents[0]].value;
            const Tensor& b = nodes_[n.parents[1]].value;
            Tensor da = g, db = g;
            for (std::size_t j = 0; j < g.numel(); ++j) {
                da[j] *= b[j];
                db[j] *= a[j];
            }
            push(n.parents[0], da);
            push(n.parents[1], db);
            break;
        }
        case Prim::Matmul: {
            const Tensor& a = nodes_[n.parents[0]].value;
            const Tensor& b = nodes_[n.parents[1]].value;
            const std::size_t r = a.shape[0], k = a.shape[1];
            if (b.shape.size() == 1) {
                Tensor da({r, k}), db({k});
                for (std::size_t i2 = 0; i2 < r; ++i2)
                    for (std::size_t j = 0; j < k; ++j) {
                        da.data[i2 * k + j] = g[i2] * b[j];
                        db[j] += a.data[i2 * k + j] * g[i2];
                    }
                push(n.parents[0], da);
                push(n.parents[1], db);
            } else {
                const std::size_t c = b.shape[1];
                Tensor da({r, k}), db({k, c});
                for (std::size_t i2 = 0; i2 < r; ++i2)
                    for (std::size_t j = 0; j < k; ++j) {
                        double acc = 0.0;
                        for (std::size_t t = 0; t < c; ++t)
                            acc += g.data[i2 * c + t] * b.data[j * c + t];
                        da.data[i2 * k + j] = acc;
                    }
                for (std::size_t j = 0; j < k; ++j)
                    for (std::size_t t = 0; t < c; ++t) {
                        double acc = 0.0;
                        for (std::size_t i2 = 0; i2 < r; ++i2)
                            acc += a.data[i2 * k + j] * g.data[i2 * c + t];
                        db.data[j * c + t] = acc;
                    }
                push(n.parents[0], da);
                push(n.parents[1], db);
            }
            break;
        }
        case Prim::Scale: {
            Tensor da = g;
            for (double& v : da.data) v *= n.scalar;
            push(n.parents[0], da);
            break;
        }
        case Prim::Sigmoid: {
            Tensor da = g;
            for (std::size_t j = 0; j < da.numel(); ++j) {
                const double y = n.value[j];
                da[j] *= y * (1.0 - y);
            }
            push(n.parents[0], da);
            break;
        }
        case Prim::Tanh: {
            Tensor da = g;
            for (std::size_t j = 0; j < da.numel(); ++j) {
                const double y = n.value[j];
                da[j] *= 1.0 - y * y;
            }
            push(n.parents[0], da);
            break;
        }
        case Prim::Exp: {
            Tensor da = g;
            for (std::size_t j = 0; j < da.numel(); ++j) da[j] *= n.value[j];
            push(n.parents[0], da);
            break;
        }
        case Prim::Log: {
            const Tensor& a = nodes_[n.parents[0]].value;
            Tensor da = g;
            for (std::size_t j = 0; j < da.numel(); ++j) da[j] /= a[j];
            push(n.parents[0], da);
            break;
        }
        case Prim::Square: {
            const Tensor& a = nodes_[n.parents[0]].value;
            Tensor da = g;
            for (std::size_t j = 0; j < da.numel(); ++j) da[j] *= 2.0 * a[j];
            push(n.parents[0], da);
            break;
        }
        case Prim::Sum: {
            const Tensor& a = nodes_[n.parents[0]].value;
            push(n.parents[0], Tensor::full(a.shape, g[0]));
            break;
        }
        case Prim::Mean: {
            const Tensor& a = nodes_[n.parents[0]].value;
            push(n.parents[0], Tensor::full(a.shape, g[0] / static_cast<double>(a.numel())));
            break;
        }
        case Prim::Concat: {
            std::size_t off = 0;
            for (int p : n.parents) {
                const Tensor& t = nodes_[p].value;
                Tensor dp(t.shape);
                for (std::size_t j = 0; j < t.numel(); ++j) dp[j] = g[off + j];
                off += t.numel();
                push(p, dp);
            }
            break;
        }
        case Prim::Slice: {
            const Tensor& a = nodes_[n.parents[0]].value;
            Tensor da(a.shape);
            for (std::size_t j = 0; j < n.aux1; ++j) da[n.aux0 + j] = g[j];
            push(n.parents[0], da);
            break;
        }
    }
}

inline GradientMap Tape::backward(const Value& root,
                                  const std::vector<const ParamSet*>& sets) const {
    if (!root.valid() || root.tape != this)
        throw std::invalid_argument("backward: root not on this tape");
    if (root.tensor().numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    root.tensor().shape_str());

    std::vector<Tensor> adj(nodes_.size());
    std::vector<char> touched(nodes_.size(), 0);
    adj[root.idx] = Tensor::scalar(1.0);
    touched[root.idx] = 1;

    for (int i = root.idx; i >= 0; --i) {
        if (!touched[i]) continue;
        propagate(i, adj, touched);
    }

    GradientMap out;
    for (const ParamSet* s : sets) {
        for (const auto& [name, t] : s->entries()) {
            auto it = named_.find(name);
            if (it != named_.end() && touched[it->second] && !adj[it->second].data.empty())
                out.add(name, adj[it->second]);
            else
                out.add(name, Tensor(t.shape));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// convenience wrappers

inline Value apply_primitive(Tape& tape, Prim kind, const std::vector<Value>& inputs) {
    return tape.apply(kind, inputs);
}

inline Value add(Value a, Value b) { return a.tape->apply(Prim::Add, {a, b}); }
inline Value sub(Value a, Value b) { return a.tape->apply(Prim::Sub, {a, b}); }
inline Value mul(Value a, Value b) { return a.tape->apply(Prim::Mul, {a, b}); }
inline Value matmul(Value a, Value b) { return a.tape->apply(Prim::Matmul, {a, b}); }
inline Value scale(Value a, double s) { return a.tape->apply(Prim::Scale, {a}, s); }
inline Value sigmoid(Value a) { return a.tape->apply(Prim::Sigmoid, {a}); }
inline Value tanh(Value a) { return a.tape->apply(Prim::Tanh, {a}); }
inline Value exp(Value a) { return a.tape->apply(Prim::Exp, {a}); }
inline Value log(Value a) { return a.tape->apply(Prim::Log, {a}); }
inline Value square(Value a) { return a.tape->apply(Prim::Square, {a}); }
inline Value sum(Value a) { return a.tape->apply(Prim::Sum, {a}); }
inline Value mean(Value a) { return a.tape->apply(Prim::Mean, {a}); }
inline Value concat(const std::vector<Value>& vs) {
    return vs.front().tape->apply(Prim::Concat, vs);
}
inline Value slice(Value a, std::size_t start, std::size_t len) {
    return a.tape->apply(Prim::Slice, {a}, 0.0, start, len);
}

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }

inline BoundParams bind_params(Tape& tape, std::initializer_list<const ParamSet*> sets) {
    BoundParams bound;
    for (const ParamSet* s : sets)
        for (const auto& [name, t] : s->entries()) bound.insert(name, tape.param(name, t));
    return bound;
}

inline BoundParams bind_params(Tape& tape, const ParamSet& ps) { return bind_params(tape, {&ps}); }

// Max relative error between reverse-mode and central-difference gradients,
// per coordinate, denominator max(|analytic|, |numeric|, 1e-8). The builder
// must be deterministic: any random draws have to be reseeded inside it.
inline double grad_check(const std::function<Value(Tape&, const ParamSet&)>& build,
                         const ParamSet& params, double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");

    Tape tape;
    Value root = build(tape, params);
    GradientMap analytic = tape.backward(root, params);

    ParamSet probe = params;
    double max_err = 0.0;
    for (auto& [name, tensor] : probe.entries()) {
        const Tensor& ga = analytic.at(name);
        for (std::size_t i = 0; i < tensor.numel(); ++i) {
            const double orig = tensor[i];
            tensor[i] = orig + epsilon;
            Tape tp;
            const double lp = build(tp, probe).scalar();
            tensor[i] = orig - epsilon;
            Tape tm;
            const double lm = build(tm, probe).scalar();
            tensor[i] = orig;

            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double a = ga[i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_err = std::max(max_err, std::fabs(a - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace tdlgm
