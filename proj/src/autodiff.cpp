#include "lpnet/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lpnet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapCM = Eigen::Map<const RowMat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

MapCM mat(const Tensor& t) { return MapCM(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
MapM mat(Tensor& t) { return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
MapCV vec(const Tensor& t) { return MapCV(t.data.data(), static_cast<Eigen::Index>(t.size())); }
MapV vec(Tensor& t) { return MapV(t.data.data(), static_cast<Eigen::Index>(t.size())); }

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Message is only built on failure.
#define REQUIRE(ok, what)                             \
    do {                                              \
        if (!(ok)) throw ShapeMismatch(what);         \
    } while (0)

void require_vector(const Tensor& t, const char* op) {
    REQUIRE(t.rank() == 1, std::string(op) + ": expected a vector, got " + shape_string(t.shape));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    REQUIRE(a.shape == b.shape, std::string(op) + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

}  // namespace

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    REQUIRE(data.size() == shape_size(shape), "tensor data does not match shape " + shape_string(shape));
}

Tensor Tensor::vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

double Tensor::item() const {
    REQUIRE(data.size() == 1, "item() on tensor of shape " + shape_string(shape));
    return data[0];
}

std::size_t ParamSet::add(std::string name, std::vector<std::size_t> shape, double k, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.data) x = rng.uniform(-k, k);
    return add(std::move(name), std::move(t));
}

std::size_t ParamSet::add(std::string name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
}

std::size_t ParamSet::index(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    throw std::out_of_range("no parameter named " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::vector<Tensor> ParamSet::zeros_like() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.emplace_back(p.value.shape);
    return out;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(const ParamSet* params, bool track_grads) : params_(params), track_grads_(track_grads) {
    if (params_) param_leaf_.assign(params_->size(), -1);
    nodes_.reserve(1024);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.own = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) {
    Var v = constant(std::move(value));
    nodes_.back().requires_grad = true;
    return v;
}

Var Tape::param(std::size_t index) {
    if (!params_ || index >= params_->size()) throw std::out_of_range("parameter index out of range");
    int& leaf = param_leaf_[index];
    if (leaf < 0) {
        Node n;
        n.ref = &(*params_)[index].value;
        n.requires_grad = track_grads_;
        nodes_.push_back(std::move(n));
        leaf = static_cast<int>(nodes_.size()) - 1;
    }
    return Var{leaf};
}

const Tensor& Tape::value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.ref ? *n.ref : n.own;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.grad.size() == value(v).size() && !n.grad.data.empty()) return n.grad;
    return Tensor(value(v).shape);
}

Tensor& Tape::grad_ref(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.data.empty()) n.grad = Tensor((n.ref ? *n.ref : n.own).shape);
    return n.grad;
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn back, const char* op) {
    return push(std::move(value), std::vector<Var>(inputs), std::move(back), op);
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, BackwardFn back, const char* op) {
    for (double x : value.data)
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite result in ") + op);
    Node n;
    n.own = std::move(value);
    for (Var in : inputs)
        if (nodes_[static_cast<std::size_t>(in.id)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss, double seed) {
    if (value(loss).size() != 1) throw ShapeMismatch("backward() needs a scalar loss, got " + shape_string(value(loss).shape));
    for (Node& n : nodes_) n.grad.data.clear();
    grad_ref(loss).data[0] = seed;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || !n.back || n.grad.data.empty()) continue;
        n.back(*this, n.grad);
    }
}

void Tape::accumulate_param_grads(std::vector<Tensor>& acc) const {
    for (std::size_t i = 0; i < param_leaf_.size(); ++i) {
        if (param_leaf_[i] < 0) continue;
        const Node& n = nodes_[static_cast<std::size_t>(param_leaf_[i])];
        if (n.grad.data.empty()) continue;
        vec(acc[i]) += vec(n.grad);
    }
}

std::vector<Tensor> Tape::param_grads() const {
    std::vector<Tensor> out = params_ ? params_->zeros_like() : std::vector<Tensor>{};
    accumulate_param_grads(out);
    return out;
}

// ---------------------------------------------------------------------------
// Primitive ops

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    REQUIRE(A.rank() == 2, "matmul: left operand must be a matrix, got " + shape_string(A.shape));
    REQUIRE(B.rank() == 1 || B.rank() == 2, "matmul: right operand must be a vector or matrix");
    REQUIRE(A.cols() == B.rows(), "matmul: " + shape_string(A.shape) + " x " + shape_string(B.shape));
    Tensor out(B.rank() == 1 ? std::vector<std::size_t>{A.rows()} : std::vector<std::size_t>{A.rows(), B.cols()});
    mat(out).noalias() = mat(A) * mat(B);
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(a);
        const Tensor& B = tp.value(b);
        const MapCM G(g.data.data(), static_cast<Eigen::Index>(A.rows()), static_cast<Eigen::Index>(B.cols()));
        if (tp.requires_grad(a)) mat(tp.grad_ref(a)).noalias() += G * mat(B).transpose();
        if (tp.requires_grad(b)) {
            Tensor& gb = tp.grad_ref(b);
            MapM GB(gb.data.data(), static_cast<Eigen::Index>(B.rows()), static_cast<Eigen::Index>(B.cols()));
            GB.noalias() += mat(A).transpose() * G;
        }
    }, "matmul");
}

Var add(Tape& t, Var a, Var b) {
    require_same(t.value(a), t.value(b), "add");
    Tensor out = t.value(a);
    vec(out) += vec(t.value(b));
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a)) vec(tp.grad_ref(a)) += vec(g);
        if (tp.requires_grad(b)) vec(tp.grad_ref(b)) += vec(g);
    }, "add");
}

Var subtract(Tape& t, Var a, Var b) {
    require_same(t.value(a), t.value(b), "subtract");
    Tensor out = t.value(a);
    vec(out) -= vec(t.value(b));
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a)) vec(tp.grad_ref(a)) += vec(g);
        if (tp.requires_grad(b)) vec(tp.grad_ref(b)) -= vec(g);
    }, "subtract");
}

Var elemwise_mul(Tape& t, Var a, Var b) {
    require_same(t.value(a), t.value(b), "elemwise_mul");
    Tensor out = t.value(a);
    vec(out).array() *= vec(t.value(b)).array();
    return t.push(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a)) vec(tp.grad_ref(a)).array() += vec(g).array() * vec(tp.value(b)).array();
        if (tp.requires_grad(b)) vec(tp.grad_ref(b)).array() += vec(g).array() * vec(tp.value(a)).array();
    }, "elemwise_mul");
}

Var square(Tape& t, Var a) {
    Tensor out = t.value(a);
    vec(out).array() = vec(out).array().square();
    return t.push(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        vec(tp.grad_ref(a)).array() += 2.0 * vec(g).array() * vec(tp.value(a)).array();
    }, "square");
}

Var scale(Tape& t, Var a, double c) {
    Tensor out = t.value(a);
    vec(out) *= c;
    return t.push(std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) { vec(tp.grad_ref(a)) += c * vec(g); },
                  "scale");
}

Var concat(Tape& t, const std::vector<Var>& parts) {
    std::vector<double> out;
    std::vector<std::size_t> sizes;
    for (Var p : parts) {
        const Tensor& v = t.value(p);
        require_vector(v, "concat");
        out.insert(out.end(), v.data.begin(), v.data.end());
        sizes.push_back(v.size());
    }
    return t.push(Tensor::vector(std::move(out)), parts, [parts, sizes](Tape& tp, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (tp.requires_grad(parts[i]))
                vec(tp.grad_ref(parts[i])) += MapCV(g.data.data() + off, static_cast<Eigen::Index>(sizes[i]));
            off += sizes[i];
        }
    }, "concat");
}

Var slice(Tape& t, Var a, std::size_t offset, std::size_t length) {
    const Tensor& v = t.value(a);
    require_vector(v, "slice");
    REQUIRE(offset + length <= v.size(), "slice out of range");
    std::vector<double> out(v.data.begin() + static_cast<std::ptrdiff_t>(offset),
                            v.data.begin() + static_cast<std::ptrdiff_t>(offset + length));
    return t.push(Tensor::vector(std::move(out)), {a}, [a, offset, length](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_ref(a);
        for (std::size_t i = 0; i < length; ++i) ga.data[offset + i] += g.data[i];
    }, "slice");
}

Var sigmoid(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& x : out.data) x = sigm(x);
    const Var y{static_cast<int>(t.node_count())};
    return t.push(std::move(out), {a}, [a, y](Tape& tp, const Tensor& g) {
        const auto s = vec(tp.value(y)).array();
        vec(tp.grad_ref(a)).array() += vec(g).array() * s * (1.0 - s);
    }, "sigmoid");
}

Var tanh(Tape& t, Var a) {
    Tensor out = t.value(a);
    for (double& x : out.data) x = std::tanh(x);
    const Var y{static_cast<int>(t.node_count())};
    return t.push(std::move(out), {a}, [a, y](Tape& tp, const Tensor& g) {
        const auto s = vec(tp.value(y)).array();
        vec(tp.grad_ref(a)).array() += vec(g).array() * (1.0 - s.square());
    }, "tanh");
}

Var softmax(Tape& t, Var a) {
    const Tensor& in = t.value(a);
    require_vector(in, "softmax");
    REQUIRE(in.size() > 0, "softmax of empty vector");
    Tensor out = in;
    const double mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0;
    for (double& x : out.data) sum += (x = std::exp(x - mx));
    for (double& x : out.data) x /= sum;
    const Var y{static_cast<int>(t.node_count())};
    return t.push(std::move(out), {a}, [a, y](Tape& tp, const Tensor& g) {
        const auto s = vec(tp.value(y));
        const double dot = s.dot(vec(g));
        vec(tp.grad_ref(a)).array() += s.array() * (vec(g).array() - dot);
    }, "softmax");
}

Var one_hot(Tape& t, std::size_t index, std::size_t depth) {
    if (index >= depth) throw ShapeMismatch("one_hot: index " + std::to_string(index) + " >= depth " + std::to_string(depth));
    Tensor out({depth});
    out.data[index] = 1.0;
    return t.constant(std::move(out));
}

Var sum_weighted(Tape& t, const std::vector<Var>& vectors, Var weights) {
    const Tensor& w = t.value(weights);
    require_vector(w, "sum_weighted");
    REQUIRE(w.size() == vectors.size() && !vectors.empty(), "sum_weighted: weight count does not match vector count");
    const Tensor& first = t.value(vectors[0]);
    require_vector(first, "sum_weighted");
    Tensor out(first.shape);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        require_same(t.value(vectors[i]), first, "sum_weighted");
        vec(out) += w.data[i] * vec(t.value(vectors[i]));
    }
    std::vector<Var> inputs = vectors;
    inputs.push_back(weights);
    return t.push(std::move(out), inputs, [vectors, weights](Tape& tp, const Tensor& g) {
        const Tensor& w = tp.value(weights);
        const bool wg = tp.requires_grad(weights);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            if (tp.requires_grad(vectors[i])) vec(tp.grad_ref(vectors[i])) += w.data[i] * vec(g);
            if (wg) tp.grad_ref(weights).data[i] += vec(tp.value(vectors[i])).dot(vec(g));
        }
    }, "sum_weighted");
}

double bce_value(double p, int y) {
    const double c = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
    return y ? -std::log(c) : -std::log(1.0 - c);
}

Var bce_loss(Tape& t, Var p, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("bce_loss: target must be 0 or 1");
    const double pv = t.value(p).item();
    return t.push(Tensor::scalar(bce_value(pv, y)), {p}, [p, y](Tape& tp, const Tensor& g) {
        const double v = tp.value(p).item();
        if (v < kBceEpsilon || v > 1.0 - kBceEpsilon) return;  // clamped: flat
        tp.grad_ref(p).data[0] += g.data[0] * (v - y) / (v * (1.0 - v));
    }, "bce_loss");
}

// ---------------------------------------------------------------------------
// GRU

namespace {

std::size_t make_block(ParamSet& ps, const std::string& name, std::vector<std::size_t> shape, double k, Rng& rng) {
    return ps.add(name, std::move(shape), k, rng);
}

void check_block(const ParamSet& ps, std::size_t idx, std::vector<std::size_t> shape) {
    REQUIRE(ps[idx].value.shape == shape, "parameter " + ps[idx].name + " has shape " + shape_string(ps[idx].value.shape) +
                                              ", expected " + shape_string(shape));
}

// x is either a dense vector (x_var valid) or a one-hot column (index).
Var gru_impl(Tape& t, Var x_var, std::size_t index, Var h_var, const GruParams& p) {
    // Parameter leaves first: creating them may grow the node list.
    const Var Wz = t.param(p.Wz), Uz = t.param(p.Uz), bz = t.param(p.bz);
    const Var Wr = t.param(p.Wr), Ur = t.param(p.Ur), br = t.param(p.br);
    const Var Wh = t.param(p.Wh), Uh = t.param(p.Uh), bh = t.param(p.bh);
    const Tensor& h = t.value(h_var);
    REQUIRE(h.rank() == 1 && h.size() == p.state, "gru_cell: state has shape " + shape_string(h.shape) + ", expected [" +
                                                      std::to_string(p.state) + "]");
    const bool dense = x_var.valid();
    if (dense) {
        const Tensor& x = t.value(x_var);
        REQUIRE(x.rank() == 1 && x.size() == p.input, "gru_cell: input has shape " + shape_string(x.shape) + ", expected [" +
                                                          std::to_string(p.input) + "]");
    } else {
        REQUIRE(index < p.input, "gru_cell: one-hot index out of range");
    }
    const auto n = static_cast<Eigen::Index>(p.state);

    auto input_term = [&](Var W) -> Eigen::VectorXd {
        if (dense) return mat(t.value(W)) * vec(t.value(x_var));
        return mat(t.value(W)).col(static_cast<Eigen::Index>(index));
    };

    const auto hv = vec(h);
    Eigen::VectorXd z = input_term(Wz) + mat(t.value(Uz)) * hv + vec(t.value(bz));
    Eigen::VectorXd r = input_term(Wr) + mat(t.value(Ur)) * hv + vec(t.value(br));
    for (Eigen::Index i = 0; i < n; ++i) {
        z[i] = sigm(z[i]);
        r[i] = sigm(r[i]);
    }
    Eigen::VectorXd c = r.cwiseProduct(hv);
    Eigen::VectorXd nn = input_term(Wh) + mat(t.value(Uh)) * c + vec(t.value(bh));
    for (Eigen::Index i = 0; i < n; ++i) nn[i] = std::tanh(nn[i]);

    Tensor out({p.state});
    vec(out) = (1.0 - z.array()) * hv.array() + z.array() * nn.array();

    std::vector<Var> inputs{h_var, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh};
    if (dense) inputs.push_back(x_var);
    auto back = [=, z = std::move(z), r = std::move(r), c = std::move(c), nn = std::move(nn)](Tape& tp, const Tensor& gt) {
        const auto g = vec(gt);
        const auto hv = vec(tp.value(h_var));
        Eigen::VectorXd dh = g.cwiseProduct((1.0 - z.array()).matrix());
        const Eigen::VectorXd dan = (g.array() * z.array() * (1.0 - nn.array().square())).matrix();
        const Eigen::VectorXd daz = (g.array() * (nn - hv).array() * z.array() * (1.0 - z.array())).matrix();
        const Eigen::VectorXd dc = mat(tp.value(Uh)).transpose() * dan;
        const Eigen::VectorXd dar = (dc.array() * hv.array() * r.array() * (1.0 - r.array())).matrix();
        dh += dc.cwiseProduct(r);
        dh.noalias() += mat(tp.value(Uz)).transpose() * daz;
        dh.noalias() += mat(tp.value(Ur)).transpose() * dar;
        if (tp.requires_grad(h_var)) vec(tp.grad_ref(h_var)) += dh;

        auto input_grad = [&](Var W, const Eigen::VectorXd& da) {
            if (dense) mat(tp.grad_ref(W)).noalias() += da * vec(tp.value(x_var)).transpose();
            else mat(tp.grad_ref(W)).col(static_cast<Eigen::Index>(index)) += da;
        };
        input_grad(Wz, daz);
        input_grad(Wr, dar);
        input_grad(Wh, dan);
        mat(tp.grad_ref(Uz)).noalias() += daz * hv.transpose();
        mat(tp.grad_ref(Ur)).noalias() += dar * hv.transpose();
        mat(tp.grad_ref(Uh)).noalias() += dan * c.transpose();
        vec(tp.grad_ref(bz)) += daz;
        vec(tp.grad_ref(br)) += dar;
        vec(tp.grad_ref(bh)) += dan;
        if (dense && tp.requires_grad(x_var)) {
            auto dx = vec(tp.grad_ref(x_var));
            dx.noalias() += mat(tp.value(Wz)).transpose() * daz;
            dx.noalias() += mat(tp.value(Wr)).transpose() * dar;
            dx.noalias() += mat(tp.value(Wh)).transpose() * dan;
        }
    };
    return t.push(std::move(out), inputs, std::move(back), "gru_cell");
}

}  // namespace

GruParams GruParams::create(ParamSet& ps, const std::string& prefix, std::size_t input, std::size_t state, Rng& rng) {
    const double kx = 1.0 / std::sqrt(static_cast<double>(input));
    const double kh = 1.0 / std::sqrt(static_cast<double>(state));
    GruParams p{};
    p.input = input;
    p.state = state;
    p.Wz = make_block(ps, prefix + ".Wz", {state, input}, kx, rng);
    p.Uz = make_block(ps, prefix + ".Uz", {state, state}, kh, rng);
    p.bz = make_block(ps, prefix + ".bz", {state}, kh, rng);
    p.Wr = make_block(ps, prefix + ".Wr", {state, input}, kx, rng);
    p.Ur = make_block(ps, prefix + ".Ur", {state, state}, kh, rng);
    p.br = make_block(ps, prefix + ".br", {state}, kh, rng);
    p.Wh = make_block(ps, prefix + ".Wh", {state, input}, kx, rng);
    p.Uh = make_block(ps, prefix + ".Uh", {state, state}, kh, rng);
    p.bh = make_block(ps, prefix + ".bh", {state}, kh, rng);
    return p;
}

GruParams GruParams::find(const ParamSet& ps, const std::string& prefix) {
    GruParams p{};
    p.Wz = ps.index(prefix + ".Wz");
    p.state = ps[p.Wz].value.rows();
    p.input = ps[p.Wz].value.cols();
    p.Uz = ps.index(prefix + ".Uz");
    p.bz = ps.index(prefix + ".bz");
    p.Wr = ps.index(prefix + ".Wr");
    p.Ur = ps.index(prefix + ".Ur");
    p.br = ps.index(prefix + ".br");
    p.Wh = ps.index(prefix + ".Wh");
    p.Uh = ps.index(prefix + ".Uh");
    p.bh = ps.index(prefix + ".bh");
    for (std::size_t w : {p.Wz, p.Wr, p.Wh}) check_block(ps, w, {p.state, p.input});
    for (std::size_t u : {p.Uz, p.Ur, p.Uh}) check_block(ps, u, {p.state, p.state});
    for (std::size_t b : {p.bz, p.br, p.bh}) check_block(ps, b, {p.state});
    return p;
}

Var gru_cell(Tape& t, Var x, Var h, const GruParams& p) { return gru_impl(t, x, 0, h, p); }

Var gru_cell_onehot(Tape& t, std::size_t index, Var h, const GruParams& p) { return gru_impl(t, Var{}, index, h, p); }

// ---------------------------------------------------------------------------
// LSTM

LstmParams LstmParams::create(ParamSet& ps, const std::string& prefix, std::size_t input, std::size_t state, Rng& rng) {
    const double kx = 1.0 / std::sqrt(static_cast<double>(input));
    const double kh = 1.0 / std::sqrt(static_cast<double>(state));
    LstmParams p{};
    p.input = input;
    p.state = state;
    p.W = make_block(ps, prefix + ".W", {4 * state, input}, kx, rng);
    p.U = make_block(ps, prefix + ".U", {4 * state, state}, kh, rng);
    p.b = make_block(ps, prefix + ".b", {4 * state}, kh, rng);
    // Forget gate starts open so early characters survive long inputs.
    for (std::size_t i = state; i < 2 * state; ++i) ps[p.b].value[i] = 1.0;
    return p;
}

LstmParams LstmParams::find(const ParamSet& ps, const std::string& prefix) {
    LstmParams p{};
    p.W = ps.index(prefix + ".W");
    p.U = ps.index(prefix + ".U");
    p.b = ps.index(prefix + ".b");
    p.state = ps[p.U].value.cols();
    p.input = ps[p.W].value.cols();
    check_block(ps, p.W, {4 * p.state, p.input});
    check_block(ps, p.U, {4 * p.state, p.state});
    check_block(ps, p.b, {4 * p.state});
    return p;
}

Var lstm_cell_onehot(Tape& t, std::size_t index, Var hc_var, const LstmParams& p) {
    const Var W = t.param(p.W), U = t.param(p.U), b = t.param(p.b);
    const Tensor& hc = t.value(hc_var);
    const auto d = static_cast<Eigen::Index>(p.state);
    REQUIRE(hc.rank() == 1 && hc.size() == 2 * p.state, "lstm_cell: state has shape " + shape_string(hc.shape));
    REQUIRE(index < p.input, "lstm_cell: one-hot index out of range");
    const auto h = vec(hc).head(d);
    const auto c = vec(hc).tail(d);
    Eigen::VectorXd a = mat(t.value(W)).col(static_cast<Eigen::Index>(index)) + mat(t.value(U)) * h + vec(t.value(b));
    for (Eigen::Index i = 0; i < d; ++i) {
        a[i] = sigm(a[i]);
        a[d + i] = sigm(a[d + i]);
        a[2 * d + i] = std::tanh(a[2 * d + i]);
        a[3 * d + i] = sigm(a[3 * d + i]);
    }
    Eigen::VectorXd c2 = a.segment(d, d).cwiseProduct(c) + a.head(d).cwiseProduct(a.segment(2 * d, d));
    Eigen::VectorXd tc = c2.array().tanh().matrix();
    Tensor out({2 * p.state});
    vec(out).head(d) = a.tail(d).cwiseProduct(tc);
    vec(out).tail(d) = c2;

    auto back = [=, a = std::move(a), tc = std::move(tc)](Tape& tp, const Tensor& gt) {
        const auto g = vec(gt);
        const auto hv = vec(tp.value(hc_var)).head(d);
        const auto cv = vec(tp.value(hc_var)).tail(d);
        const auto i = a.head(d).array();
        const auto f = a.segment(d, d).array();
        const auto gg = a.segment(2 * d, d).array();
        const auto o = a.tail(d).array();
        const auto gh = g.head(d).array();
        const Eigen::ArrayXd dc2 = g.tail(d).array() + gh * o * (1.0 - tc.array().square());
        Eigen::VectorXd da(4 * d);
        da.head(d) = (dc2 * gg * i * (1.0 - i)).matrix();
        da.segment(d, d) = (dc2 * cv.array() * f * (1.0 - f)).matrix();
        da.segment(2 * d, d) = (dc2 * i * (1.0 - gg.square())).matrix();
        da.tail(d) = (gh * tc.array() * o * (1.0 - o)).matrix();
        mat(tp.grad_ref(W)).col(static_cast<Eigen::Index>(index)) += da;
        mat(tp.grad_ref(U)).noalias() += da * hv.transpose();
        vec(tp.grad_ref(b)) += da;
        if (tp.requires_grad(hc_var)) {
            auto ghc = vec(tp.grad_ref(hc_var));
            ghc.head(d).noalias() += mat(tp.value(U)).transpose() * da;
            ghc.tail(d) += (dc2 * f).matrix();
        }
    };
    return t.push(std::move(out), {hc_var, W, U, b}, std::move(back), "lstm_cell");
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper) {
    if (grads.size() != params.size()) throw ShapeMismatch("adam_step: gradient count does not match parameters");
    if (state.m.empty()) {
        state.m = params.zeros_like();
        state.v = params.zeros_like();
        state.t = 0;
    }
    if (state.m.size() != params.size()) throw ShapeMismatch("adam_step: state does not match parameters");
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& w = params[k].value;
        const Tensor& g = grads[k];
        require_same(w, g, "adam_step");
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m.data[i] = hyper.beta1 * m.data[i] + (1.0 - hyper.beta1) * g.data[i];
            v.data[i] = hyper.beta2 * v.data[i] + (1.0 - hyper.beta2) * g.data[i] * g.data[i];
            const double mh = m.data[i] / c1;
            const double vh = v.data[i] / c2;
            w.data[i] -= hyper.lr * mh / (std::sqrt(vh) + hyper.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint Checkpoint::from_params(const ParamSet& ps) {
    Checkpoint c;
    for (const auto& p : ps) c.tensors.emplace_back(p.name, p.value);
    return c;
}

void Checkpoint::load_into(ParamSet& ps) const {
    for (const auto& [name, t] : tensors) {
        Tensor& dst = ps[ps.index(name)].value;
        REQUIRE(dst.shape == t.shape, "checkpoint tensor " + name + " has shape " + shape_string(t.shape) + ", expected " +
                                          shape_string(dst.shape));
        dst = t;
    }
    for (const auto& p : ps)
        if (std::none_of(tensors.begin(), tensors.end(), [&](const auto& e) { return e.first == p.name; }))
            throw std::runtime_error("checkpoint lacks parameter " + p.name);
}

namespace {

void check_token(const std::string& s, const char* what) {
    if (s.empty() || std::any_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); }))
        throw std::invalid_argument(std::string("checkpoint ") + what + " must be a non-empty token without whitespace: '" +
                                    s + "'");
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
    os << "lpnet-checkpoint " << kCheckpointVersion << '\n';
    for (const auto& [k, v] : c.meta) {
        check_token(k, "meta key");
        if (v.find('\n') != std::string::npos) throw std::invalid_argument("checkpoint meta value contains a newline");
        os << "meta " << k << ' ' << v << '\n';
    }
    char buf[64];
    for (const auto& [name, t] : c.tensors) {
        check_token(name, "tensor name");
        os << "tensor " << name << ' ' << t.rank();
        for (std::size_t s : t.shape) os << ' ' << s;
        os << '\n';
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", t.data[i]);
            os << (i ? " " : "") << buf;
        }
        os << '\n';
    }
    os << "end\n";
}

Checkpoint read_checkpoint(std::istream& is) {
    auto fail = [](const std::string& msg) -> void { throw std::runtime_error("malformed checkpoint: " + msg); };
    std::string line;
    if (!std::getline(is, line)) fail("empty input");
    {
        std::istringstream hs(line);
        std::string magic;
        int version = 0;
        hs >> magic >> version;
        if (magic != "lpnet-checkpoint") fail("bad magic");
        if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));
    }
    Checkpoint c;
    bool ended = false;
    while (std::getline(is, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        if (line.rfind("meta ", 0) == 0) {
            const std::size_t sp = line.find(' ', 5);
            if (sp == std::string::npos) c.meta[line.substr(5)] = "";
            else c.meta[line.substr(5, sp - 5)] = line.substr(sp + 1);
            continue;
        }
        if (line.rfind("tensor ", 0) != 0) fail("unexpected line '" + line + "'");
        std::istringstream hs(line.substr(7));
        std::string name;
        std::size_t rank = 0;
        hs >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (auto& s : shape) hs >> s;
        if (!hs) fail("bad tensor header '" + line + "'");
        Tensor t(shape);
        std::string data;
        if (!std::getline(is, data)) fail("missing data for " + name);
        const char* p = data.c_str();
        for (std::size_t i = 0; i < t.size(); ++i) {
            char* endp = nullptr;
            t.data[i] = std::strtod(p, &endp);
            if (endp == p) fail("short data for " + name);
            p = endp;
        }
        c.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (!ended) fail("missing end marker");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_checkpoint(os, c);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return read_checkpoint(is);
}

}  // namespace lpnet
