#include "declust/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace declust {

namespace {

constexpr double kGeluCoef = 0.7978845608028654;  // sqrt(2/pi)

[[noreturn]] void fail(OpKind op, const std::string& what) {
    throw std::invalid_argument(std::string(op_name(op)) + ": " + what);
}

void check_binary_shapes(OpKind op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) && a.numel() != 1 && b.numel() != 1)
        fail(op, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

bool is_integer(double v) { return std::floor(v) == v; }

double gelu_fwd(double x) {
    double u = kGeluCoef * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
    double u = kGeluCoef * (x + 0.044715 * x * x * x);
    double t = std::tanh(u);
    double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluCoef * (1.0 + 0.134145 * x * x);
}

}  // namespace

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::kLeaf: return "leaf";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kMul: return "mul";
        case OpKind::kDiv: return "div";
        case OpKind::kMatMul: return "matmul";
        case OpKind::kExp: return "exp";
        case OpKind::kLog: return "log";
        case OpKind::kPowScalar: return "pow_scalar";
        case OpKind::kPow: return "pow";
        case OpKind::kSum: return "sum";
        case OpKind::kMean: return "mean";
        case OpKind::kMaxScalar: return "max_with_scalar";
        case OpKind::kGelu: return "gelu";
        case OpKind::kBatchNorm: return "batchnorm";
        case OpKind::kDropout: return "dropout";
        case OpKind::kDepthwiseConv: return "depthwise_conv";
        case OpKind::kPointwiseConv: return "pointwise_conv";
        case OpKind::kReshape: return "reshape";
        case OpKind::kTranspose: return "transpose";
        case OpKind::kPatchExtract: return "patch_extract";
    }
    return "?";
}

NodeId Graph::push(Node n) {
    eval_node(n, nodes_);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const { return nodes_.at(id); }

NodeId Graph::input(Tensor value) {
    Node n;
    n.op = OpKind::kLeaf;
    n.requires_grad = value.requires_grad;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
    value.requires_grad = false;
    return input(std::move(value));
}

NodeId Graph::constant(double v) { return constant(Tensor::scalar(v)); }

NodeId Graph::add(NodeId a, NodeId b) {
    check_binary_shapes(OpKind::kAdd, value(a), value(b));
    Node n;
    n.op = OpKind::kAdd;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_binary_shapes(OpKind::kSub, value(a), value(b));
    Node n;
    n.op = OpKind::kSub;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_binary_shapes(OpKind::kMul, value(a), value(b));
    Node n;
    n.op = OpKind::kMul;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
    check_binary_shapes(OpKind::kDiv, value(a), value(b));
    for (double v : value(b).data)
        if (v == 0.0) fail(OpKind::kDiv, "division by zero");
    Node n;
    n.op = OpKind::kDiv;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
        fail(OpKind::kMatMul,
             "incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Node n;
    n.op = OpKind::kMatMul;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
    Node n;
    n.op = OpKind::kExp;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
    for (double v : value(a).data)
        if (v <= 0.0) fail(OpKind::kLog, "non-positive input " + std::to_string(v));
    Node n;
    n.op = OpKind::kLog;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::pow(NodeId a, double p) {
    const Tensor& ta = value(a);
    for (double v : ta.data) {
        if (!is_integer(p) && v < 0.0)
            fail(OpKind::kPowScalar, "negative base with fractional exponent");
        if (p < 0.0 && v == 0.0) fail(OpKind::kPowScalar, "zero base with negative exponent");
    }
    Node n;
    n.op = OpKind::kPowScalar;
    n.in = {a};
    n.n_in = 1;
    n.attr = p;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::pow(NodeId a, NodeId b) {
    check_binary_shapes(OpKind::kPow, value(a), value(b));
    for (double v : value(a).data)
        if (v <= 0.0) fail(OpKind::kPow, "base must be positive for node exponent");
    Node n;
    n.op = OpKind::kPow;
    n.in = {a, b};
    n.n_in = 2;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    Node n;
    n.op = OpKind::kSum;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    Node n;
    n.op = OpKind::kMean;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::max_with(NodeId a, double c) {
    Node n;
    n.op = OpKind::kMaxScalar;
    n.in = {a};
    n.n_in = 1;
    n.attr = c;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
    Node n;
    n.op = OpKind::kGelu;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::batchnorm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& tx = value(x);
    if (tx.rank() < 2) fail(OpKind::kBatchNorm, "input rank must be >= 2, got " + shape_str(tx.shape));
    std::size_t c = tx.shape[0];
    if (value(gamma).shape != std::vector<std::size_t>{c} ||
        value(beta).shape != std::vector<std::size_t>{c})
        fail(OpKind::kBatchNorm, "gamma/beta must have shape (" + std::to_string(c) + ")");
    if (eps <= 0.0) fail(OpKind::kBatchNorm, "eps must be positive");
    Node n;
    n.op = OpKind::kBatchNorm;
    n.in = {x, gamma, beta};
    n.n_in = 3;
    n.flag = true;  // training: batch statistics
    n.attr = eps;
    n.requires_grad = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    return push(std::move(n));
}

NodeId Graph::batchnorm(NodeId x, NodeId gamma, NodeId beta, NodeId running_mean,
                        NodeId running_var, double eps) {
    const Tensor& tx = value(x);
    if (tx.rank() < 2) fail(OpKind::kBatchNorm, "input rank must be >= 2, got " + shape_str(tx.shape));
    std::size_t c = tx.shape[0];
    for (NodeId v : {gamma, beta, running_mean, running_var})
        if (value(v).shape != std::vector<std::size_t>{c})
            fail(OpKind::kBatchNorm, "per-channel params must have shape (" + std::to_string(c) + ")");
    for (double v : value(running_var).data)
        if (v + eps <= 0.0) fail(OpKind::kBatchNorm, "running variance + eps must be positive");
    Node n;
    n.op = OpKind::kBatchNorm;
    n.in = {x, gamma, beta, running_mean, running_var};
    n.n_in = 5;
    n.flag = false;  // eval: running statistics
    n.attr = eps;
    n.requires_grad = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    return push(std::move(n));
}

NodeId Graph::dropout(NodeId x, NodeId mask, double keep_prob) {
    if (!value(x).same_shape(value(mask)))
        fail(OpKind::kDropout, "mask shape " + shape_str(value(mask).shape) +
                                   " does not match input " + shape_str(value(x).shape));
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        fail(OpKind::kDropout, "keep_prob must be in (0, 1]");
    for (double v : value(mask).data)
        if (v != 0.0 && v != 1.0) fail(OpKind::kDropout, "mask entries must be 0 or 1");
    Node n;
    n.op = OpKind::kDropout;
    n.in = {x, mask};
    n.n_in = 2;
    n.attr = keep_prob;
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

NodeId Graph::depthwise_conv(NodeId x, NodeId w, NodeId b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    if (tx.rank() != 3) fail(OpKind::kDepthwiseConv, "input must be (C,H,W), got " + shape_str(tx.shape));
    std::size_t c = tx.shape[0];
    if (tw.rank() != 3 || tw.shape[0] != c || tw.shape[1] != tw.shape[2])
        fail(OpKind::kDepthwiseConv,
             "kernel must be (C,k,k) with C=" + std::to_string(c) + ", got " + shape_str(tw.shape));
    if (tw.shape[1] % 2 == 0) fail(OpKind::kDepthwiseConv, "kernel size must be odd");
    if (value(b).shape != std::vector<std::size_t>{c})
        fail(OpKind::kDepthwiseConv, "bias must have shape (" + std::to_string(c) + ")");
    Node n;
    n.op = OpKind::kDepthwiseConv;
    n.in = {x, w, b};
    n.n_in = 3;
    n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::pointwise_conv(NodeId x, NodeId w, NodeId b) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    if (tx.rank() != 3) fail(OpKind::kPointwiseConv, "input must be (C,H,W), got " + shape_str(tx.shape));
    if (tw.rank() != 2 || tw.shape[1] != tx.shape[0])
        fail(OpKind::kPointwiseConv, "weight must be (Cout," + std::to_string(tx.shape[0]) +
                                         "), got " + shape_str(tw.shape));
    if (value(b).shape != std::vector<std::size_t>{tw.shape[0]})
        fail(OpKind::kPointwiseConv, "bias must have shape (" + std::to_string(tw.shape[0]) + ")");
    Node n;
    n.op = OpKind::kPointwiseConv;
    n.in = {x, w, b};
    n.n_in = 3;
    n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
    if (shape_numel(shape) != value(a).numel())
        fail(OpKind::kReshape, "cannot reshape " + shape_str(value(a).shape) + " to " + shape_str(shape));
    Node n;
    n.op = OpKind::kReshape;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    n.value.shape = std::move(shape);  // eval fills data
    return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
    if (value(a).rank() != 2)
        fail(OpKind::kTranspose, "input must be rank 2, got " + shape_str(value(a).shape));
    Node n;
    n.op = OpKind::kTranspose;
    n.in = {a};
    n.n_in = 1;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

NodeId Graph::patch_extract(NodeId a, std::size_t p) {
    const Tensor& ta = value(a);
    if (ta.rank() != 3) fail(OpKind::kPatchExtract, "input must be (C,H,W), got " + shape_str(ta.shape));
    if (p == 0 || ta.shape[1] % p != 0 || ta.shape[2] % p != 0)
        fail(OpKind::kPatchExtract, "patch size " + std::to_string(p) +
                                        " must divide spatial dims of " + shape_str(ta.shape));
    Node n;
    n.op = OpKind::kPatchExtract;
    n.in = {a};
    n.n_in = 1;
    n.iattr = p;
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

void Graph::eval_node(Node& n, const std::vector<Node>& nodes) {
    auto in = [&](int i) -> const Tensor& { return nodes[n.in[static_cast<std::size_t>(i)]].value; };
    switch (n.op) {
        case OpKind::kLeaf:
            return;
        case OpKind::kAdd:
        case OpKind::kSub:
        case OpKind::kMul:
        case OpKind::kDiv: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const Tensor& big = a.numel() >= b.numel() ? a : b;
            Tensor out(big.shape);
            std::size_t na = a.numel(), nb = b.numel();
            for (std::size_t i = 0; i < out.numel(); ++i) {
                double x = a.data[na == 1 ? 0 : i];
                double y = b.data[nb == 1 ? 0 : i];
                switch (n.op) {
                    case OpKind::kAdd: out.data[i] = x + y; break;
                    case OpKind::kSub: out.data[i] = x - y; break;
                    case OpKind::kMul: out.data[i] = x * y; break;
                    default: out.data[i] = x / y; break;
                }
            }
            n.value = std::move(out);
            return;
        }
        case OpKind::kMatMul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
            Tensor out({m, p});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < k; ++t) acc += a.data[i * k + t] * b.data[t * p + j];
                    out.data[i * p + j] = acc;
                }
            n.value = std::move(out);
            return;
        }
        case OpKind::kExp: {
            Tensor out(in(0).shape);
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::exp(in(0).data[i]);
            n.value = std::move(out);
            return;
        }
        case OpKind::kLog: {
            Tensor out(in(0).shape);
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::log(in(0).data[i]);
            n.value = std::move(out);
            return;
        }
        case OpKind::kPowScalar: {
            Tensor out(in(0).shape);
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::pow(in(0).data[i], n.attr);
            n.value = std::move(out);
            return;
        }
        case OpKind::kPow: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            const Tensor& big = a.numel() >= b.numel() ? a : b;
            Tensor out(big.shape);
            std::size_t na = a.numel(), nb = b.numel();
            for (std::size_t i = 0; i < out.numel(); ++i)
                out.data[i] = std::pow(a.data[na == 1 ? 0 : i], b.data[nb == 1 ? 0 : i]);
            n.value = std::move(out);
            return;
        }
        case OpKind::kSum:
        case OpKind::kMean: {
            double acc = 0.0;
            for (double v : in(0).data) acc += v;
            if (n.op == OpKind::kMean) acc /= static_cast<double>(in(0).numel());
            n.value = Tensor::scalar(acc);
            return;
        }
        case OpKind::kMaxScalar: {
            Tensor out(in(0).shape);
            for (std::size_t i = 0; i < out.numel(); ++i)
                out.data[i] = in(0).data[i] >= n.attr ? in(0).data[i] : n.attr;
            n.value = std::move(out);
            return;
        }
        case OpKind::kGelu: {
            Tensor out(in(0).shape);
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = gelu_fwd(in(0).data[i]);
            n.value = std::move(out);
            return;
        }
        case OpKind::kBatchNorm: {
            const Tensor& x = in(0);
            const Tensor& gamma = in(1);
            const Tensor& beta = in(2);
            std::size_t c = x.shape[0];
            std::size_t s = x.numel() / c;
            Tensor out(x.shape);
            Tensor mean({c}), var({c});
            if (n.flag) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double m = 0.0;
                    for (std::size_t i = 0; i < s; ++i) m += x.data[ch * s + i];
                    m /= static_cast<double>(s);
                    double v = 0.0;
                    for (std::size_t i = 0; i < s; ++i) {
                        double d = x.data[ch * s + i] - m;
                        v += d * d;
                    }
                    v /= static_cast<double>(s);  // biased, matching the normalizer
                    mean.data[ch] = m;
                    var.data[ch] = v;
                }
            } else {
                mean = in(3);
                var = in(4);
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                double inv = 1.0 / std::sqrt(var.data[ch] + n.attr);
                for (std::size_t i = 0; i < s; ++i)
                    out.data[ch * s + i] =
                        gamma.data[ch] * (x.data[ch * s + i] - mean.data[ch]) * inv + beta.data[ch];
            }
            n.value = std::move(out);
            n.saved0 = std::move(mean);
            n.saved1 = std::move(var);
            return;
        }
        case OpKind::kDropout: {
            const Tensor& x = in(0);
            const Tensor& mask = in(1);
            Tensor out(x.shape);
            double inv = 1.0 / n.attr;
            for (std::size_t i = 0; i < out.numel(); ++i)
                out.data[i] = x.data[i] * mask.data[i] * inv;
            n.value = std::move(out);
            return;
        }
        case OpKind::kDepthwiseConv: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            std::size_t c = x.shape[0], h = x.shape[1], wd = x.shape[2], k = w.shape[1];
            std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
            Tensor out(x.shape);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < wd; ++xx) {
                        double acc = b.data[ch];
                        for (std::size_t dy = 0; dy < k; ++dy)
                            for (std::size_t dx = 0; dx < k; ++dx) {
                                std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - r;
                                std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + dx) - r;
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                                    ix >= static_cast<std::ptrdiff_t>(wd))
                                    continue;
                                acc += w.data[(ch * k + dy) * k + dx] *
                                       x.data[(ch * h + static_cast<std::size_t>(iy)) * wd +
                                              static_cast<std::size_t>(ix)];
                            }
                        out.data[(ch * h + y) * wd + xx] = acc;
                    }
            n.value = std::move(out);
            return;
        }
        case OpKind::kPointwiseConv: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            std::size_t ci = x.shape[0], h = x.shape[1], wd = x.shape[2], co = w.shape[0];
            std::size_t s = h * wd;
            Tensor out({co, h, wd});
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t i = 0; i < s; ++i) {
                    double acc = b.data[o];
                    for (std::size_t ch = 0; ch < ci; ++ch)
                        acc += w.data[o * ci + ch] * x.data[ch * s + i];
                    out.data[o * s + i] = acc;
                }
            n.value = std::move(out);
            return;
        }
        case OpKind::kReshape: {
            std::vector<std::size_t> target = n.value.shape;
            n.value = Tensor(std::move(target), in(0).data);
            return;
        }
        case OpKind::kTranspose: {
            const Tensor& a = in(0);
            std::size_t rws = a.shape[0], cls = a.shape[1];
            Tensor out({cls, rws});
            for (std::size_t i = 0; i < rws; ++i)
                for (std::size_t j = 0; j < cls; ++j) out.data[j * rws + i] = a.data[i * cls + j];
            n.value = std::move(out);
            return;
        }
        case OpKind::kPatchExtract: {
            const Tensor& a = in(0);
            std::size_t c = a.shape[0], h = a.shape[1], wd = a.shape[2], p = n.iattr;
            std::size_t hp = h / p, wp = wd / p, s = hp * wp;
            Tensor out({c * p * p, s});
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t py = 0; py < hp; ++py)
                    for (std::size_t px = 0; px < wp; ++px)
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx)
                                out.data[((ch * p + dy) * p + dx) * s + (py * wp + px)] =
                                    a.data[(ch * h + py * p + dy) * wd + (px * p + dx)];
            n.value = std::move(out);
            return;
        }
    }
}

const Tensor& Graph::batch_mean(NodeId id) const {
    const Node& n = node(id);
    if (n.op != OpKind::kBatchNorm || !n.flag)
        throw std::invalid_argument("batch_mean: node is not a training-mode batchnorm");
    return n.saved0;
}

const Tensor& Graph::batch_var(NodeId id) const {
    const Node& n = node(id);
    if (n.op != OpKind::kBatchNorm || !n.flag)
        throw std::invalid_argument("batch_var: node is not a training-mode batchnorm");
    return n.saved1;
}

GradMap Graph::backward(NodeId loss) const {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be a single element, got shape " +
                                    shape_str(ln.value.shape));

    GradMap gm;
    gm.grads.reserve(nodes_.size());
    for (const Node& n : nodes_) gm.grads.emplace_back(Tensor::zeros(n.value.shape));
    gm.grads[loss].data[0] = 1.0;

    for (std::size_t idx = loss + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (n.op == OpKind::kLeaf) continue;
        const Tensor& g = gm.grads[idx];
        bool live = false;
        for (double v : g.data)
            if (v != 0.0) {
                live = true;
                break;
            }
        if (!live) continue;

        auto in_val = [&](int i) -> const Tensor& {
            return nodes_[n.in[static_cast<std::size_t>(i)]].value;
        };
        auto in_grad = [&](int i) -> Tensor& {
            return gm.grads[n.in[static_cast<std::size_t>(i)]];
        };
        // Accumulates an output-shaped contribution into a possibly
        // broadcast (single-element) operand gradient.
        auto acc = [](Tensor& dst, std::size_t flat, double v) {
            dst.data[dst.numel() == 1 ? 0 : flat] += v;
        };

        switch (n.op) {
            case OpKind::kAdd:
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    acc(in_grad(0), i, g.data[i]);
                    acc(in_grad(1), i, g.data[i]);
                }
                break;
            case OpKind::kSub:
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    acc(in_grad(0), i, g.data[i]);
                    acc(in_grad(1), i, -g.data[i]);
                }
                break;
            case OpKind::kMul: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    acc(in_grad(0), i, g.data[i] * b.data[b.numel() == 1 ? 0 : i]);
                    acc(in_grad(1), i, g.data[i] * a.data[a.numel() == 1 ? 0 : i]);
                }
                break;
            }
            case OpKind::kDiv: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    double x = a.data[a.numel() == 1 ? 0 : i];
                    double y = b.data[b.numel() == 1 ? 0 : i];
                    acc(in_grad(0), i, g.data[i] / y);
                    acc(in_grad(1), i, -g.data[i] * x / (y * y));
                }
                break;
            }
            case OpKind::kMatMul: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                Tensor& da = in_grad(0);
                Tensor& db = in_grad(1);
                std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t t = 0; t < k; ++t) {
                        double accum = 0.0;
                        for (std::size_t j = 0; j < p; ++j)
                            accum += g.data[i * p + j] * b.data[t * p + j];
                        da.data[i * k + t] += accum;
                    }
                for (std::size_t t = 0; t < k; ++t)
                    for (std::size_t j = 0; j < p; ++j) {
                        double accum = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            accum += a.data[i * k + t] * g.data[i * p + j];
                        db.data[t * p + j] += accum;
                    }
                break;
            }
            case OpKind::kExp:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    in_grad(0).data[i] += g.data[i] * n.value.data[i];
                break;
            case OpKind::kLog:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    in_grad(0).data[i] += g.data[i] / in_val(0).data[i];
                break;
            case OpKind::kPowScalar: {
                double p = n.attr;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    double d = p == 0.0 ? 0.0 : p * std::pow(in_val(0).data[i], p - 1.0);
                    in_grad(0).data[i] += g.data[i] * d;
                }
                break;
            }
            case OpKind::kPow: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    double x = a.data[a.numel() == 1 ? 0 : i];
                    double y = b.data[b.numel() == 1 ? 0 : i];
                    acc(in_grad(0), i, g.data[i] * y * std::pow(x, y - 1.0));
                    acc(in_grad(1), i, g.data[i] * n.value.data[i] * std::log(x));
                }
                break;
            }
            case OpKind::kSum:
                for (std::size_t i = 0; i < in_grad(0).numel(); ++i)
                    in_grad(0).data[i] += g.data[0];
                break;
            case OpKind::kMean: {
                double s = g.data[0] / static_cast<double>(in_grad(0).numel());
                for (std::size_t i = 0; i < in_grad(0).numel(); ++i) in_grad(0).data[i] += s;
                break;
            }
            case OpKind::kMaxScalar:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    if (in_val(0).data[i] >= n.attr) in_grad(0).data[i] += g.data[i];
                break;
            case OpKind::kGelu:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    in_grad(0).data[i] += g.data[i] * gelu_bwd(in_val(0).data[i]);
                break;
            case OpKind::kBatchNorm: {
                const Tensor& x = in_val(0);
                const Tensor& gamma = in_val(1);
                std::size_t c = x.shape[0];
                std::size_t s = x.numel() / c;
                const Tensor& mean = n.saved0;
                const Tensor& var = n.saved1;
                Tensor& dx = in_grad(0);
                Tensor& dgamma = in_grad(1);
                Tensor& dbeta = in_grad(2);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double inv = 1.0 / std::sqrt(var.data[ch] + n.attr);
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (std::size_t i = 0; i < s; ++i) {
                        double xh = (x.data[ch * s + i] - mean.data[ch]) * inv;
                        double gi = g.data[ch * s + i];
                        sum_g += gi;
                        sum_gx += gi * xh;
                    }
                    dbeta.data[ch] += sum_g;
                    dgamma.data[ch] += sum_gx;
                    if (n.flag) {
                        double ns = static_cast<double>(s);
                        for (std::size_t i = 0; i < s; ++i) {
                            double xh = (x.data[ch * s + i] - mean.data[ch]) * inv;
                            double gi = g.data[ch * s + i];
                            dx.data[ch * s + i] +=
                                gamma.data[ch] * inv * (gi - sum_g / ns - xh * sum_gx / ns);
                        }
                    } else {
                        for (std::size_t i = 0; i < s; ++i)
                            dx.data[ch * s + i] += g.data[ch * s + i] * gamma.data[ch] * inv;
                        // running stats are leaves in eval mode; expose their
                        // formal gradients too in case a caller marks them
                        Tensor& dmean = in_grad(3);
                        Tensor& dvar = in_grad(4);
                        double dm = 0.0, dv = 0.0;
                        for (std::size_t i = 0; i < s; ++i) {
                            double gi = g.data[ch * s + i];
                            dm -= gi * gamma.data[ch] * inv;
                            dv += gi * gamma.data[ch] * (x.data[ch * s + i] - mean.data[ch]) *
                                  (-0.5) * inv * inv * inv;
                        }
                        dmean.data[ch] += dm;
                        dvar.data[ch] += dv;
                    }
                }
                break;
            }
            case OpKind::kDropout: {
                const Tensor& mask = in_val(1);
                double inv = 1.0 / n.attr;
                for (std::size_t i = 0; i < g.numel(); ++i)
                    in_grad(0).data[i] += g.data[i] * mask.data[i] * inv;
                break;
            }
            case OpKind::kDepthwiseConv: {
                const Tensor& x = in_val(0);
                const Tensor& w = in_val(1);
                Tensor& dx = in_grad(0);
                Tensor& dw = in_grad(1);
                Tensor& db = in_grad(2);
                std::size_t c = x.shape[0], h = x.shape[1], wd = x.shape[2], k = w.shape[1];
                std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xx = 0; xx < wd; ++xx) {
                            double gv = g.data[(ch * h + y) * wd + xx];
                            if (gv == 0.0) continue;
                            db.data[ch] += gv;
                            for (std::size_t dy = 0; dy < k; ++dy)
                                for (std::size_t dxp = 0; dxp < k; ++dxp) {
                                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - r;
                                    std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + dxp) - r;
                                    if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                                        ix >= static_cast<std::ptrdiff_t>(wd))
                                        continue;
                                    std::size_t xi = (ch * h + static_cast<std::size_t>(iy)) * wd +
                                                     static_cast<std::size_t>(ix);
                                    dw.data[(ch * k + dy) * k + dxp] += gv * x.data[xi];
                                    dx.data[xi] += gv * w.data[(ch * k + dy) * k + dxp];
                                }
                        }
                break;
            }
            case OpKind::kPointwiseConv: {
                const Tensor& x = in_val(0);
                const Tensor& w = in_val(1);
                Tensor& dx = in_grad(0);
                Tensor& dw = in_grad(1);
                Tensor& db = in_grad(2);
                std::size_t ci = x.shape[0], s = x.shape[1] * x.shape[2], co = w.shape[0];
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t i = 0; i < s; ++i) {
                        double gv = g.data[o * s + i];
                        if (gv == 0.0) continue;
                        db.data[o] += gv;
                        for (std::size_t ch = 0; ch < ci; ++ch) {
                            dw.data[o * ci + ch] += gv * x.data[ch * s + i];
                            dx.data[ch * s + i] += gv * w.data[o * ci + ch];
                        }
                    }
                break;
            }
            case OpKind::kReshape:
                for (std::size_t i = 0; i < g.numel(); ++i) in_grad(0).data[i] += g.data[i];
                break;
            case OpKind::kTranspose: {
                std::size_t rws = in_val(0).shape[0], cls = in_val(0).shape[1];
                for (std::size_t i = 0; i < rws; ++i)
                    for (std::size_t j = 0; j < cls; ++j)
                        in_grad(0).data[i * cls + j] += g.data[j * rws + i];
                break;
            }
            case OpKind::kPatchExtract: {
                const Tensor& a = in_val(0);
                std::size_t c = a.shape[0], h = a.shape[1], wd = a.shape[2], p = n.iattr;
                std::size_t hp = h / p, wp = wd / p, s = hp * wp;
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t py = 0; py < hp; ++py)
                        for (std::size_t px = 0; px < wp; ++px)
                            for (std::size_t dy = 0; dy < p; ++dy)
                                for (std::size_t dx = 0; dx < p; ++dx)
                                    in_grad(0).data[(ch * h + py * p + dy) * wd + (px * p + dx)] +=
                                        g.data[((ch * p + dy) * p + dx) * s + (py * wp + px)];
                break;
            }
            case OpKind::kLeaf:
                break;
        }
    }
    return gm;
}

bool Graph::replay_matches() const {
    std::vector<Node> copy = nodes_;
    for (std::size_t i = 0; i < copy.size(); ++i) {
        if (copy[i].op == OpKind::kLeaf) continue;
        Node fresh = copy[i];
        fresh.value = Tensor();
        if (copy[i].op == OpKind::kReshape) fresh.value.shape = copy[i].value.shape;
        fresh.saved0 = Tensor();
        fresh.saved1 = Tensor();
        eval_node(fresh, copy);
        if (!fresh.value.bit_equal(copy[i].value)) return false;
        if (copy[i].op == OpKind::kBatchNorm && copy[i].flag) {
            if (!fresh.saved0.bit_equal(copy[i].saved0) ||
                !fresh.saved1.bit_equal(copy[i].saved1))
                return false;
        }
        copy[i] = std::move(fresh);
    }
    return true;
}

NodeId stack_rows(Graph& g, const std::vector<NodeId>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty row list");
    std::size_t n = rows.size();
    std::size_t d = g.value(rows[0]).numel();
    NodeId out = 0;
    bool first = true;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.value(rows[i]).numel() != d)
            throw std::invalid_argument("stack_rows: row " + std::to_string(i) +
                                        " length mismatch");
        Tensor basis({n, 1});
        basis.data[i] = 1.0;
        NodeId row2d = g.reshape(rows[i], {1, d});
        NodeId term = g.matmul(g.constant(std::move(basis)), row2d);
        out = first ? term : g.add(out, term);
        first = false;
    }
    return out;
}

}  // namespace declust
