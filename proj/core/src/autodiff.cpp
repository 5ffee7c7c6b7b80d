#include "asfnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "asfnet/rng.hpp"

namespace asfnet {

namespace {

template <typename T>
void add_into(TensorT<T>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst.data[i] = static_cast<T>(static_cast<double>(dst.data[i]) + src[i]);
    }
}

}  // namespace

template <typename T>
typename TapeT<T>::Value TapeT<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return Value{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const typename TapeT<T>::Node& TapeT<T>::node(Value v) const {
    return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
void TapeT<T>::check_valid(Value v, const char* op) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw Error(std::string(op) + ": value handle does not belong to this tape");
    }
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::input(TensorT<T> v) {
    ensure_finite(v, "tape input");
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(v);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::param(const std::string& name, const TensorT<T>& v) {
    if (param_nodes_.count(name)) {
        throw Error("tape: parameter '" + name + "' bound twice");
    }
    ensure_finite(v, "tape param '" + name + "'");
    Node n;
    n.kind = OpKind::Leaf;
    n.value = v;
    n.name = name;
    auto val = push(std::move(n));
    param_nodes_.emplace(name, val.id);
    return val;
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::conv(Value x, Value weights, std::optional<Value> bias,
                                        const ConvSpec& spec) {
    check_valid(x, "conv");
    check_valid(weights, "conv");
    const std::vector<T>* bias_vec = nullptr;
    std::vector<T> bias_copy;
    int bias_id = -1;
    if (spec.has_bias) {
        if (!bias || !bias->valid()) throw ShapeError("conv: spec has bias but none supplied");
        check_valid(*bias, "conv");
        const auto& bv = node(*bias).value;
        if (bv.n() != spec.out_channels || bv.c() != 1 || bv.h() != 1 || bv.w() != 1) {
            throw ShapeError("conv: bias leaf dims " + bv.dims_str() + " must be (" +
                             std::to_string(spec.out_channels) + ", 1, 1, 1)");
        }
        bias_copy = bv.data;
        bias_vec = &bias_copy;
        bias_id = bias->id;
    } else if (bias && bias->valid()) {
        throw ShapeError("conv: bias supplied but spec has has_bias=false");
    }
    Node n;
    n.kind = OpKind::Conv;
    n.a = x.id;
    n.b = weights.id;
    n.c = bias_id;
    n.spec = spec;
    n.value = conv2d(node(x).value, node(weights).value, bias_vec, spec);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::relu(Value x) {
    check_valid(x, "relu");
    Node n;
    n.kind = OpKind::Relu;
    n.a = x.id;
    n.value = asfnet::relu(node(x).value);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::scale_by(Value x, Value lambda) {
    check_valid(x, "scale_by");
    check_valid(lambda, "scale_by");
    const auto& lv = node(lambda).value;
    if (lv.count() != 1) {
        throw ShapeError("scale_by: lambda leaf must have exactly one element, got " +
                         lv.dims_str());
    }
    Node n;
    n.kind = OpKind::ScaleParam;
    n.a = x.id;
    n.b = lambda.id;
    n.value = asfnet::scale(node(x).value, lv.data[0]);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::scale_const(Value x, T lambda) {
    check_valid(x, "scale_const");
    Node n;
    n.kind = OpKind::ScaleConst;
    n.a = x.id;
    n.lambda = lambda;
    n.value = asfnet::scale(node(x).value, lambda);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::concat(Value a, Value b) {
    check_valid(a, "concat");
    check_valid(b, "concat");
    Node n;
    n.kind = OpKind::Concat;
    n.a = a.id;
    n.b = b.id;
    n.value = concat_channels(node(a).value, node(b).value);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::resize(Value x, int out_h, int out_w) {
    check_valid(x, "resize");
    Node n;
    n.kind = OpKind::Resize;
    n.a = x.id;
    n.value = bicubic_resize(node(x).value, out_h, out_w);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::add(Value a, Value b) {
    check_valid(a, "add");
    check_valid(b, "add");
    Node n;
    n.kind = OpKind::Add;
    n.a = a.id;
    n.b = b.id;
    n.value = asfnet::add(node(a).value, node(b).value);
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::sum(Value x) {
    check_valid(x, "sum");
    Node n;
    n.kind = OpKind::Sum;
    n.a = x.id;
    double acc = 0.0;
    for (T v : node(x).value.data) acc += static_cast<double>(v);
    n.value = TensorT<T>(1, 1, 1, 1, static_cast<T>(acc));
    return push(std::move(n));
}

template <typename T>
typename TapeT<T>::Value TapeT<T>::l2_loss(Value pred, Value target) {
    check_valid(pred, "l2_loss");
    check_valid(target, "l2_loss");
    const auto& p = node(pred).value;
    const auto& t = node(target).value;
    if (!p.same_dims(t)) {
        throw ShapeError("l2_loss: prediction dims " + p.dims_str() +
                         " do not match target dims " + t.dims_str());
    }
    Node n;
    n.kind = OpKind::L2Loss;
    n.a = pred.id;
    n.b = target.id;
    double acc = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double d = static_cast<double>(p.data[i]) - static_cast<double>(t.data[i]);
        acc += d * d;
    }
    acc /= 2.0 * static_cast<double>(std::max(1, p.n()));
    n.value = TensorT<T>(1, 1, 1, 1, static_cast<T>(acc));
    return push(std::move(n));
}

template <typename T>
const TensorT<T>& TapeT<T>::value(Value v) const {
    check_valid(v, "value");
    return node(v).value;
}

template <typename T>
const TensorT<T>& TapeT<T>::grad(Value v) const {
    check_valid(v, "grad");
    if (!backward_done_) throw Error("grad: backward() has not been run on this tape");
    return node(v).grad;
}

template <typename T>
void TapeT<T>::backward_scalar(Value output) {
    check_valid(output, "backward");
    if (node(output).value.count() != 1) {
        throw ShapeError("backward_scalar: output is not scalar-shaped, dims " +
                         node(output).value.dims_str());
    }
    backward(output, TensorT<T>(1, 1, 1, 1, T(1)));
}

template <typename T>
void TapeT<T>::backward(Value output, const TensorT<T>& seed) {
    check_valid(output, "backward");
    if (seed.dims != node(output).value.dims) {
        throw ShapeError("backward: seed dims " + seed.dims_str() +
                         " do not match output dims " + node(output).value.dims_str());
    }
    for (Node& n : nodes_) {
        n.grad = TensorT<T>(n.value.dims[0], n.value.dims[1], n.value.dims[2], n.value.dims[3]);
    }
    nodes_[static_cast<std::size_t>(output.id)].grad = seed;

    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        const TensorT<T>& g = n.grad;
        switch (n.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::Conv: {
                const TensorT<T>& x = nodes_[n.a].value;
                const TensorT<T>& w = nodes_[n.b].value;
                const ConvSpec& spec = n.spec;
                const int cpg = spec.in_channels / spec.groups();
                const int filters_per_group = spec.out_channels / spec.groups();
                std::vector<double> gx(x.count(), 0.0), gw(w.count(), 0.0);
                std::vector<double> gb(n.c >= 0 ? nodes_[n.c].value.count() : 0, 0.0);
                for (int in = 0; in < x.n(); ++in) {
                    for (int oc = 0; oc < spec.out_channels; ++oc) {
                        const int group = spec.depthwise ? oc / filters_per_group : 0;
                        for (int oy = 0; oy < g.h(); ++oy) {
                            const int iy0 = oy * spec.sh - spec.ph;
                            for (int ox = 0; ox < g.w(); ++ox) {
                                const double gval =
                                    static_cast<double>(g.at(in, oc, oy, ox));
                                if (gval == 0.0) continue;
                                if (!gb.empty()) gb[static_cast<std::size_t>(oc)] += gval;
                                const int ix0 = ox * spec.sw - spec.pw;
                                for (int icg = 0; icg < cpg; ++icg) {
                                    const int ic = group * cpg + icg;
                                    for (int ky = 0; ky < spec.kh; ++ky) {
                                        const int iy = iy0 + ky * spec.dh;
                                        if (iy < 0 || iy >= x.h()) continue;
                                        for (int kx = 0; kx < spec.kw; ++kx) {
                                            const int ix = ix0 + kx * spec.dw;
                                            if (ix < 0 || ix >= x.w()) continue;
                                            gx[x.index(in, ic, iy, ix)] +=
                                                static_cast<double>(w.at(oc, icg, ky, kx)) * gval;
                                            gw[w.index(oc, icg, ky, kx)] +=
                                                static_cast<double>(x.at(in, ic, iy, ix)) * gval;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                add_into(nodes_[n.a].grad, gx);
                add_into(nodes_[n.b].grad, gw);
                if (n.c >= 0) add_into(nodes_[n.c].grad, gb);
                break;
            }
            case OpKind::Relu: {
                // Subgradient at exactly 0 is 0.
                const TensorT<T>& x = nodes_[n.a].value;
                TensorT<T>& gx = nodes_[n.a].grad;
                for (std::size_t i = 0; i < x.data.size(); ++i) {
                    if (x.data[i] > T(0)) {
                        gx.data[i] = static_cast<T>(static_cast<double>(gx.data[i]) +
                                                    static_cast<double>(g.data[i]));
                    }
                }
                break;
            }
            case OpKind::ScaleParam: {
                const TensorT<T>& x = nodes_[n.a].value;
                const double lambda = static_cast<double>(nodes_[n.b].value.data[0]);
                TensorT<T>& gx = nodes_[n.a].grad;
                double gl = 0.0;
                for (std::size_t i = 0; i < x.data.size(); ++i) {
                    const double gv = static_cast<double>(g.data[i]);
                    gx.data[i] =
                        static_cast<T>(static_cast<double>(gx.data[i]) + lambda * gv);
                    gl += static_cast<double>(x.data[i]) * gv;
                }
                TensorT<T>& glam = nodes_[n.b].grad;
                glam.data[0] = static_cast<T>(static_cast<double>(glam.data[0]) + gl);
                break;
            }
            case OpKind::ScaleConst: {
                TensorT<T>& gx = nodes_[n.a].grad;
                const double lambda = static_cast<double>(n.lambda);
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    gx.data[i] = static_cast<T>(static_cast<double>(gx.data[i]) +
                                                lambda * static_cast<double>(g.data[i]));
                }
                break;
            }
            case OpKind::Concat: {
                TensorT<T>& ga = nodes_[n.a].grad;
                TensorT<T>& gb2 = nodes_[n.b].grad;
                const int ca = ga.c();
                const std::size_t plane =
                    static_cast<std::size_t>(g.h()) * static_cast<std::size_t>(g.w());
                for (int in = 0; in < g.n(); ++in) {
                    for (int ch = 0; ch < g.c(); ++ch) {
                        const T* src = g.data.data() + (static_cast<std::size_t>(in) * g.c() + ch) * plane;
                        TensorT<T>& dst = ch < ca ? ga : gb2;
                        const int dch = ch < ca ? ch : ch - ca;
                        T* d = dst.data.data() + (static_cast<std::size_t>(in) * dst.c() + dch) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            d[i] = static_cast<T>(static_cast<double>(d[i]) +
                                                  static_cast<double>(src[i]));
                        }
                    }
                }
                break;
            }
            case OpKind::Resize: {
                // Adjoint scatters through the same 4x4 Keys weights.
                const TensorT<T>& x = nodes_[n.a].value;
                std::vector<double> gx(x.count(), 0.0);
                const int out_h = n.value.h(), out_w = n.value.w();
                std::vector<std::pair<int, std::array<double, 4>>> xs(out_w), ys(out_h);
                for (int ox = 0; ox < out_w; ++ox) {
                    const double src = bicubic_source_coord(ox, x.w(), out_w);
                    const double fl = std::floor(src);
                    xs[ox] = {static_cast<int>(fl) - 1, bicubic_weights(src - fl)};
                }
                for (int oy = 0; oy < out_h; ++oy) {
                    const double src = bicubic_source_coord(oy, x.h(), out_h);
                    const double fl = std::floor(src);
                    ys[oy] = {static_cast<int>(fl) - 1, bicubic_weights(src - fl)};
                }
                for (int in = 0; in < x.n(); ++in) {
                    for (int ic = 0; ic < x.c(); ++ic) {
                        for (int oy = 0; oy < out_h; ++oy) {
                            for (int ox = 0; ox < out_w; ++ox) {
                                const double gval =
                                    static_cast<double>(g.at(in, ic, oy, ox));
                                if (gval == 0.0) continue;
                                for (int i = 0; i < 4; ++i) {
                                    const int ry = std::clamp(ys[oy].first + i, 0, x.h() - 1);
                                    for (int j = 0; j < 4; ++j) {
                                        const int rx = std::clamp(xs[ox].first + j, 0, x.w() - 1);
                                        gx[x.index(in, ic, ry, rx)] +=
                                            ys[oy].second[i] * xs[ox].second[j] * gval;
                                    }
                                }
                            }
                        }
                    }
                }
                add_into(nodes_[n.a].grad, gx);
                break;
            }
            case OpKind::Add: {
                TensorT<T>& ga = nodes_[n.a].grad;
                TensorT<T>& gb2 = nodes_[n.b].grad;
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    const double gv = static_cast<double>(g.data[i]);
                    ga.data[i] = static_cast<T>(static_cast<double>(ga.data[i]) + gv);
                    gb2.data[i] = static_cast<T>(static_cast<double>(gb2.data[i]) + gv);
                }
                break;
            }
            case OpKind::Sum: {
                TensorT<T>& gx = nodes_[n.a].grad;
                const double gv = static_cast<double>(g.data[0]);
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    gx.data[i] = static_cast<T>(static_cast<double>(gx.data[i]) + gv);
                }
                break;
            }
            case OpKind::L2Loss: {
                const TensorT<T>& p = nodes_[n.a].value;
                const TensorT<T>& t = nodes_[n.b].value;
                TensorT<T>& gp = nodes_[n.a].grad;
                TensorT<T>& gt = nodes_[n.b].grad;
                const double factor =
                    static_cast<double>(g.data[0]) / static_cast<double>(std::max(1, p.n()));
                for (std::size_t i = 0; i < p.data.size(); ++i) {
                    const double d =
                        static_cast<double>(p.data[i]) - static_cast<double>(t.data[i]);
                    gp.data[i] =
                        static_cast<T>(static_cast<double>(gp.data[i]) + factor * d);
                    gt.data[i] =
                        static_cast<T>(static_cast<double>(gt.data[i]) - factor * d);
                }
                break;
            }
        }
    }
    backward_done_ = true;
}

template <typename T>
std::map<std::string, TensorT<T>> TapeT<T>::param_grads(const ParamStoreT<T>& store) const {
    if (!backward_done_) throw Error("param_grads: backward() has not been run on this tape");
    std::map<std::string, TensorT<T>> out;
    for (const auto& name : store.names()) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) {
            out.emplace(name, nodes_[static_cast<std::size_t>(it->second)].grad);
        } else {
            const auto& v = store.at(name).value;
            out.emplace(name, TensorT<T>(v.dims[0], v.dims[1], v.dims[2], v.dims[3]));
        }
    }
    return out;
}

template <typename T>
double TapeT<T>::min_abs_relu_input() const {
    double best = std::numeric_limits<double>::infinity();
    for (const Node& n : nodes_) {
        if (n.kind != OpKind::Relu) continue;
        for (T v : nodes_[n.a].value.data) {
            best = std::min(best, std::abs(static_cast<double>(v)));
        }
    }
    return best;
}

template <typename T>
std::uint64_t TapeT<T>::relu_sign_signature() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const Node& n : nodes_) {
        if (n.kind != OpKind::Relu) continue;
        for (T v : nodes_[n.a].value.data) {
            h ^= v > T(0) ? 0x9eu : 0x31u;
            h *= 1099511628211ull;
        }
    }
    return h;
}

template class TapeT<float>;
template class TapeT<double>;

namespace {

struct ScalarEval {
    double value = 0.0;
    std::uint64_t sig = 0;
    double min_relu = std::numeric_limits<double>::infinity();
};

ScalarEval eval_scalar(ParamStoreT<double>& params, const GraphFn& graph,
                       std::map<std::string, TensorT<double>>* grads_out) {
    TapeT<double> tape;
    GraphBuilder<double> builder(tape, params);
    auto out = graph(tape, builder);
    auto s = tape.sum(out);
    ScalarEval r;
    r.value = tape.value(s).data[0];
    r.sig = tape.relu_sign_signature();
    r.min_relu = tape.min_abs_relu_input();
    if (grads_out != nullptr) {
        tape.backward_scalar(s);
        *grads_out = tape.param_grads(params);
    }
    return r;
}

}  // namespace

GradCheckReport grad_check(ParamStoreT<double>& params, const GraphFn& graph,
                           const GradCheckOptions& opts) {
    GradCheckReport rep;
    rep.fd_step = opts.fd_step;
    rep.tolerance = opts.tolerance;

    std::map<std::string, TensorT<double>> base_grads;
    const ScalarEval base = eval_scalar(params, graph, &base_grads);
    if (!std::isfinite(base.value)) {
        throw NumericError("grad check: base forward evaluation is non-finite");
    }
    rep.min_abs_relu_input = base.min_relu;

    for (const auto& name : params.names()) {
        auto& entry = params.at(name);
        GradCheckEntry e;
        e.param = name;
        const std::size_t n = entry.value.count();
        if (n == 0) {
            rep.entries.push_back(e);
            continue;
        }

        std::vector<std::size_t> indices;
        if (n <= static_cast<std::size_t>(opts.samples_per_param)) {
            for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
        } else {
            Rng rng(Rng::derive_seed(opts.rng_seed, name));
            std::set<std::size_t> seen;
            while (seen.size() < static_cast<std::size_t>(opts.samples_per_param)) {
                seen.insert(static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
            }
            indices.assign(seen.begin(), seen.end());
        }

        for (std::size_t idx : indices) {
            const double theta = entry.value.data[idx];
            const double h = opts.fd_step * std::max(1.0, std::abs(theta));
            entry.value.data[idx] = theta + h;
            const ScalarEval plus = eval_scalar(params, graph, nullptr);
            entry.value.data[idx] = theta - h;
            const ScalarEval minus = eval_scalar(params, graph, nullptr);
            entry.value.data[idx] = theta;

            const double fd = (plus.value - minus.value) / (2.0 * h);
            if (!std::isfinite(fd)) {
                throw NumericError("grad check: non-finite finite-difference estimate for "
                                   "parameter '" + name + "'");
            }
            if (plus.sig != base.sig || minus.sig != base.sig) e.kink = true;

            const double analytic = base_grads.at(name).data[idx];
            const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
            e.max_rel_err = std::max(e.max_rel_err, std::abs(analytic - fd) / denom);
            ++e.checked;
        }
        rep.entries.push_back(e);
    }

    for (const auto& e : rep.entries) {
        if (e.kink) rep.kink_detected = true;
        if (e.max_rel_err >= rep.worst_rel_err) {
            rep.worst_rel_err = e.max_rel_err;
            rep.worst_param = e.param;
        }
    }
    rep.pass = !rep.kink_detected && rep.worst_rel_err < rep.tolerance;
    return rep;
}

}  // namespace asfnet
