#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "asfnet/tensor.hpp"

namespace asfnet {

/// Named leaf tensors with training metadata. Iteration follows insertion
/// order, which fixes checkpoint layout and optimizer update order.
template <typename T>
class ParamStoreT {
public:
    struct Entry {
        TensorT<T> value;
        bool trainable = true;
        bool decay = true;  // participates in decoupled weight decay
    };

    void add(const std::string& name, TensorT<T> value, bool trainable = true, bool decay = true) {
        if (map_.count(name)) throw Error("param store: duplicate parameter '" + name + "'");
        order_.push_back(name);
        map_.emplace(name, Entry{std::move(value), trainable, decay});
    }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw Error("param store: unknown parameter '" + name + "'");
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw Error("param store: unknown parameter '" + name + "'");
        return it->second;
    }

    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> map_;
};

using ParamStore = ParamStoreT<float>;

template <typename To, typename From>
ParamStoreT<To> convert_store(const ParamStoreT<From>& src) {
    ParamStoreT<To> dst;
    for (const auto& name : src.names()) {
        const auto& e = src.at(name);
        TensorT<To> v(e.value.dims, std::vector<To>(e.value.data.begin(), e.value.data.end()));
        dst.add(name, std::move(v), e.trainable, e.decay);
    }
    return dst;
}

/// Define-by-run reverse-mode tape over the tensor kernels. Forward calls
/// record nodes; backward() walks them in reverse, accumulating adjoints in
/// 64-bit before storing them at the tape's precision. A tape is confined to
/// one thread.
template <typename T>
class TapeT {
public:
    struct Value {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // Leaves.
    Value input(TensorT<T> v);
    Value param(const std::string& name, const TensorT<T>& v);

    // Recorded tensor ops.
    Value conv(Value x, Value weights, std::optional<Value> bias, const ConvSpec& spec);
    Value relu(Value x);
    Value scale_by(Value x, Value lambda);  // lambda is a (1,1,1,1) leaf
    Value scale_const(Value x, T lambda);
    Value concat(Value a, Value b);
    Value resize(Value x, int out_h, int out_w);
    Value add(Value a, Value b);

    // Reductions.
    Value sum(Value x);                       // -> (1,1,1,1)
    Value l2_loss(Value pred, Value target);  // (1/(2N)) * sum((pred-target)^2) -> (1,1,1,1)

    const TensorT<T>& value(Value v) const;

    /// Seeds the output adjoint and propagates to every node. Re-running
    /// replaces (does not accumulate) previous gradients.
    void backward(Value output, const TensorT<T>& seed);
    void backward_scalar(Value output);  // seed = 1 for (1,1,1,1) outputs

    const TensorT<T>& grad(Value v) const;

    /// Gradient for every parameter in `store`, keyed by name; parameters
    /// that never reached the output get zero tensors of matching shape.
    std::map<std::string, TensorT<T>> param_grads(const ParamStoreT<T>& store) const;

    // Kink diagnostics for the gradient checker.
    double min_abs_relu_input() const;     // +inf when the graph has no relu
    std::uint64_t relu_sign_signature() const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class OpKind { Leaf, Conv, Relu, ScaleParam, ScaleConst, Concat, Resize, Add, Sum, L2Loss };

    struct Node {
        OpKind kind;
        int a = -1, b = -1, c = -1;  // input node ids
        TensorT<T> value;
        TensorT<T> grad;
        ConvSpec spec;      // Conv
        T lambda = T(0);    // ScaleConst
        std::string name;   // Leaf
    };

    Value push(Node node);
    const Node& node(Value v) const;
    void check_valid(Value v, const char* op) const;

    std::vector<Node> nodes_;
    std::unordered_map<std::string, int> param_nodes_;
    bool backward_done_ = false;
};

using Tape = TapeT<float>;

/// Binds ParamStore entries into a tape on demand, once per name, so two
/// references to the same parameter share one leaf (gradients accumulate).
template <typename T>
class GraphBuilder {
public:
    GraphBuilder(TapeT<T>& tape, const ParamStoreT<T>& store) : tape_(tape), store_(store) {}

    typename TapeT<T>::Value p(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        auto v = tape_.param(name, store_.at(name).value);
        bound_.emplace(name, v);
        return v;
    }

    TapeT<T>& tape() { return tape_; }
    const ParamStoreT<T>& store() const { return store_; }

private:
    TapeT<T>& tape_;
    const ParamStoreT<T>& store_;
    std::unordered_map<std::string, typename TapeT<T>::Value> bound_;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double fd_step = 1e-3;      // central-difference step, relative to max(1, |element|)
    int samples_per_param = 4;  // elements probed per parameter tensor
    std::uint64_t rng_seed = 0;
};

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    int checked = 0;
    bool kink = false;  // a probe crossed a relu activation boundary
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double fd_step = 0.0;
    double tolerance = 0.0;
    std::string worst_param;
    double worst_rel_err = 0.0;
    double min_abs_relu_input = 0.0;
    bool kink_detected = false;
    bool pass = false;
};

using GraphFn =
    std::function<TapeT<double>::Value(TapeT<double>&, GraphBuilder<double>&)>;

/// Compares backward() against 64-bit central finite differences, probing a
/// deterministic sample of elements per parameter. The graph output is
/// reduced with sum() to a scalar. Probes that flip any relu activation are
/// reported as kinks instead of numeric mismatches; either fails the report.
GradCheckReport grad_check(ParamStoreT<double>& params, const GraphFn& graph,
                           const GradCheckOptions& opts = {});

}  // namespace asfnet
