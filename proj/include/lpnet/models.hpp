#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpnet/autodiff.hpp"
#include "lpnet/logic.hpp"
#include "lpnet/taskgen.hpp"

namespace lpnet {

class UnknownCharacter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// 0 = padding, 1-26 = a-z, 27-52 = A-Z, 53-62 = ( ) , - . : ? space newline ;
struct CharVocab {
    static constexpr std::size_t kSize = 63;
    static constexpr int kPad = 0;
    static int index(char c);
    static char symbol(int index);
    static std::vector<int> encode(std::string_view text);
};

/// (R+2) x L x m' character grid; the last two slots are the null sentinel
/// (no literals) and the blank rule "()".
struct EncodedContext {
    std::size_t rules = 0;
    std::size_t literals = 0;
    std::size_t width = 0;
    std::vector<int> chars;
    std::vector<std::size_t> literal_counts;  // per slot

    std::size_t slots() const { return rules + 2; }
    std::size_t null_slot() const { return rules; }
    std::size_t blank_slot() const { return rules + 1; }
    int at(std::size_t rule, std::size_t literal, std::size_t pos) const;
    /// Characters of one literal without padding.
    std::vector<int> literal(std::size_t rule, std::size_t literal) const;
};

struct EncodedQuery {
    std::vector<int> chars;
};

EncodedContext encode_context(const Program& p);
EncodedQuery encode_query(const Atom& query);
std::pair<EncodedContext, EncodedQuery> encode(const Program& context, const Atom& query);
std::pair<EncodedContext, EncodedQuery> encode(const Sample& sample, const Atom& query);

enum class AttentionVariant { sigmoid, softmax };
enum class EmbeddingVariant { literal, lit_rule };
enum class UnifierDirection { forward, reversed };

std::string to_string(AttentionVariant v);
std::string to_string(EmbeddingVariant v);
std::string to_string(UnifierDirection v);
AttentionVariant parse_attention_variant(std::string_view s);
EmbeddingVariant parse_embedding_variant(std::string_view s);
UnifierDirection parse_unifier_direction(std::string_view s);

/// Per-iteration attention rows (T x (R+2)) and states s^0..s^T.
struct StepTrace {
    std::vector<std::vector<double>> attention;
    std::vector<std::vector<double>> states;
};

/// Anything that maps a sample to one probability per query.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::vector<double> predict(const Sample& sample, int iterations) const = 0;
    virtual std::string name() const = 0;
};

/// Trainable predictor backed by a ParamSet.
class Model : public Predictor {
public:
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    /// Probability nodes, one per query, on a tape over params().
    virtual std::vector<Var> forward(Tape& tape, const Sample& sample, int iterations) const = 0;
    virtual Checkpoint checkpoint() const = 0;
    virtual int default_iterations() const = 0;
    virtual std::unique_ptr<Model> clone() const = 0;

    std::vector<double> predict(const Sample& sample, int iterations) const override;

protected:
    ParamSet params_;
};

struct ImaConfig {
    std::size_t d = 64;
    int iterations = 4;
    AttentionVariant attention = AttentionVariant::softmax;
    EmbeddingVariant embedding = EmbeddingVariant::literal;
    UnifierDirection unifier = UnifierDirection::forward;
    /// tanh between the two attention layers (off: the layers compose linearly).
    bool attention_tanh = false;

    void validate() const;
};

class ImaModel : public Model {
public:
    ImaModel(const ImaConfig& cfg, std::uint64_t seed);
    explicit ImaModel(const Checkpoint& c);

    const ImaConfig& config() const { return cfg_; }

    /// Context-side graph: per-slot rule embedding and literal embeddings.
    struct Context {
        std::vector<Var> heads;
        std::vector<std::vector<Var>> literals;
        std::size_t null_slot = 0;
        std::size_t blank_slot = 0;
    };

    struct Step {
        Var state;
        Var attention;
    };

    /// Supplies a replacement attention row for iteration t (or nothing).
    using AttentionOverride = std::function<std::optional<Tensor>(int t, std::size_t slots)>;

    Var embed_literal(Tape& t, const std::vector<int>& chars) const;
    Var embed_rule(Tape& t, const std::vector<Var>& literal_embeddings) const;
    Context embed_context(Tape& t, const EncodedContext& ctx) const;
    Var attention_features(Tape& t, Var s, Var q, Var r) const;
    Var attention_logit(Tape& t, Var s, Var q, Var r) const;
    Var unify(Tape& t, Var s, const Context& c, std::size_t slot) const;
    Step step(Tape& t, const Context& c, Var s, Var q, const Tensor* forced_attention = nullptr) const;
    /// s^0 = q, `iterations` steps, then sigma(readout . s^T + bias).
    Var forward(Tape& t, const Context& c, Var q, int iterations, StepTrace* trace = nullptr,
                const AttentionOverride& override_attention = {}) const;

    double probability(const Program& context, const Atom& query, int iterations, StepTrace* trace = nullptr) const;

    std::vector<Var> forward(Tape& tape, const Sample& sample, int iterations) const override;
    Checkpoint checkpoint() const override;
    int default_iterations() const override { return cfg_.iterations; }
    std::unique_ptr<Model> clone() const override { return std::make_unique<ImaModel>(*this); }
    std::string name() const override;

private:
    void build(Rng& rng);
    void bind();

    ImaConfig cfg_;
    GruParams embed_gru_{};
    GruParams unifier_gru_{};
    std::optional<GruParams> rule_gru_;
    std::size_t att_U_ = 0, att_b1_ = 0, att_W_ = 0, att_b2_ = 0;
    std::size_t blank_ = 0, readout_w_ = 0, readout_b_ = 0;
};

struct LstmConfig {
    std::size_t d = 64;
};

/// Reads the query characters, a ';' separator, then the canonical context text.
class LstmBaseline : public Model {
public:
    LstmBaseline(const LstmConfig& cfg, std::uint64_t seed);
    explicit LstmBaseline(const Checkpoint& c);

    const LstmConfig& config() const { return cfg_; }

    static std::vector<int> input_sequence(const Program& context, const Atom& query);
    Var forward_query(Tape& t, const Program& context, const Atom& query) const;
    double probability(const Program& context, const Atom& query) const;

    std::vector<Var> forward(Tape& tape, const Sample& sample, int iterations) const override;
    Checkpoint checkpoint() const override;
    int default_iterations() const override { return 0; }
    std::unique_ptr<Model> clone() const override { return std::make_unique<LstmBaseline>(*this); }
    std::string name() const override;

private:
    void bind();

    LstmConfig cfg_;
    LstmParams lstm_{};
    std::size_t readout_w_ = 0, readout_b_ = 0;
};

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& c);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const Model& m);

}  // namespace lpnet
