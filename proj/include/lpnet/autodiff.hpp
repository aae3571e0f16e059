#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpnet/rng.hpp"

namespace lpnet {

class ShapeMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A forward op produced NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major f64 tensor. Scalars are any tensor with one element.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::vector<double> v);
    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double item() const;

    bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

struct Parameter {
    std::string name;
    Tensor value;
};

class ParamSet {
public:
    /// Adds a tensor initialised uniformly in [-k, k].
    std::size_t add(std::string name, std::vector<std::size_t> shape, double k, Rng& rng);
    std::size_t add(std::string name, Tensor value);

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    std::size_t index(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::size_t scalar_count() const;

    std::vector<Tensor> zeros_like() const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter> params_;
};

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape;
using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is already topologically sorted. A tape is single-owner; several tapes may
/// share one read-only ParamSet.
class Tape {
public:
    /// With `track_grads` false, parameter leaves need no gradient and ops
    /// record no backward closures (inference).
    explicit Tape(const ParamSet* params = nullptr, bool track_grads = true);

    /// Leaf without gradient.
    Var constant(Tensor value);
    /// Leaf with gradient (used by gradient checks on raw inputs).
    Var input(Tensor value);
    /// Leaf referencing parameter `index`; one node per parameter per tape.
    Var param(std::size_t index);

    const Tensor& value(Var v) const;
    /// Gradient after backward(); zeros if the node was not reached.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    /// Seeds d(loss)=seed and propagates to every node, each visited once.
    void backward(Var loss, double seed = 1.0);

    /// Adds parameter gradients from the last backward() into `acc` (aligned with the ParamSet).
    void accumulate_param_grads(std::vector<Tensor>& acc) const;
    std::vector<Tensor> param_grads() const;

    std::size_t node_count() const { return nodes_.size(); }
    const ParamSet* params() const { return params_; }

    /// Records an op result. `inputs` decide whether the node needs a gradient.
    Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn back, const char* op);
    Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn back, const char* op);

    /// Gradient buffer of `v` for accumulation inside backward functions.
    Tensor& grad_ref(Var v);

private:
    struct Node {
        Tensor own;
        const Tensor* ref = nullptr;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn back;
    };
    const ParamSet* params_;
    bool track_grads_;
    std::vector<Node> nodes_;
    std::vector<int> param_leaf_;
};

// Primitive ops.
Var matmul(Tape& t, Var a, Var b);  // [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]
Var add(Tape& t, Var a, Var b);
Var subtract(Tape& t, Var a, Var b);
Var elemwise_mul(Tape& t, Var a, Var b);
Var square(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var concat(Tape& t, const std::vector<Var>& parts);
Var slice(Tape& t, Var a, std::size_t offset, std::size_t length);
Var sigmoid(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var softmax(Tape& t, Var a);
Var one_hot(Tape& t, std::size_t index, std::size_t depth);
/// sum_i weights[i] * vectors[i]
Var sum_weighted(Tape& t, const std::vector<Var>& vectors, Var weights);

inline constexpr double kBceEpsilon = 1e-7;
/// -(y ln p + (1-y) ln(1-p)) with p clamped to [eps, 1-eps].
Var bce_loss(Tape& t, Var p, int y);
double bce_value(double p, int y);

/// Parameter indices of one GRU (9 blocks).
struct GruParams {
    std::size_t Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;
    std::size_t input = 0;
    std::size_t state = 0;

    static GruParams create(ParamSet& ps, const std::string& prefix, std::size_t input, std::size_t state, Rng& rng);
    static GruParams find(const ParamSet& ps, const std::string& prefix);
};

/// z=s(Wz x+Uz h+bz), r=s(Wr x+Ur h+br), n=tanh(Wh x+Uh(r*h)+bh), h'=(1-z)*h+z*n
Var gru_cell(Tape& t, Var x, Var h, const GruParams& p);
/// Same with x = one_hot(index, p.input), applied as a column gather.
Var gru_cell_onehot(Tape& t, std::size_t index, Var h, const GruParams& p);

/// Stacked LSTM blocks: W [4d x in], U [4d x d], b [4d] in gate order i, f, g, o.
struct LstmParams {
    std::size_t W, U, b;
    std::size_t input = 0;
    std::size_t state = 0;

    static LstmParams create(ParamSet& ps, const std::string& prefix, std::size_t input, std::size_t state, Rng& rng);
    static LstmParams find(const ParamSet& ps, const std::string& prefix);
};

/// State is [h; c] of length 2d. One-hot input by index.
Var lstm_cell_onehot(Tape& t, std::size_t index, Var hc, const LstmParams& p);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;
};

void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper = {});

/// Named tensors plus string metadata; text format with hex floats, bit-exact.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    static Checkpoint from_params(const ParamSet& ps);
    /// Copies tensors into `ps` by name; shapes must match.
    void load_into(ParamSet& ps) const;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lpnet
