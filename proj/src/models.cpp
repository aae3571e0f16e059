#include "lpnet/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace lpnet {

// ---------------------------------------------------------------------------
// Vocabulary and encoding

namespace {
constexpr std::string_view kPunct = "(),-.:? \n;";
}

int CharVocab::index(char c) {
    if (c >= 'a' && c <= 'z') return 1 + (c - 'a');
    if (c >= 'A' && c <= 'Z') return 27 + (c - 'A');
    const auto pos = kPunct.find(c);
    if (pos != std::string_view::npos) return 53 + static_cast<int>(pos);
    std::string shown = (c == '\t') ? "\\t" : std::string(1, c);
    throw UnknownCharacter("character '" + shown + "' (code " + std::to_string(static_cast<unsigned char>(c)) +
                           ") is not in the vocabulary");
}

char CharVocab::symbol(int index) {
    if (index >= 1 && index <= 26) return static_cast<char>('a' + index - 1);
    if (index >= 27 && index <= 52) return static_cast<char>('A' + index - 27);
    if (index >= 53 && index <= 62) return kPunct[static_cast<std::size_t>(index - 53)];
    throw std::out_of_range("vocabulary index " + std::to_string(index) + " has no symbol");
}

std::vector<int> CharVocab::encode(std::string_view text) {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(index(c));
    return out;
}

int EncodedContext::at(std::size_t rule, std::size_t lit, std::size_t pos) const {
    if (rule >= slots() || lit >= literals || pos >= width) throw std::out_of_range("EncodedContext::at");
    return chars[(rule * literals + lit) * width + pos];
}

std::vector<int> EncodedContext::literal(std::size_t rule, std::size_t lit) const {
    std::vector<int> out;
    for (std::size_t k = 0; k < width; ++k) {
        const int c = at(rule, lit, k);
        if (c == CharVocab::kPad) break;
        out.push_back(c);
    }
    return out;
}

EncodedContext encode_context(const Program& p) {
    std::vector<std::vector<std::string>> lits;
    for (const Rule& r : p.rules) {
        std::vector<std::string> row{render(r.head)};
        for (const Literal& l : r.body) row.push_back(render(l));
        lits.push_back(std::move(row));
    }
    lits.push_back({});      // null sentinel
    lits.push_back({"()"});  // blank rule
    EncodedContext e;
    e.rules = p.rules.size();
    e.literals = 1;
    e.width = 2;
    for (const auto& row : lits) {
        e.literals = std::max(e.literals, row.size());
        for (const auto& s : row) e.width = std::max(e.width, s.size());
    }
    e.chars.assign(e.slots() * e.literals * e.width, CharVocab::kPad);
    for (std::size_t i = 0; i < lits.size(); ++i) {
        e.literal_counts.push_back(lits[i].size());
        for (std::size_t j = 0; j < lits[i].size(); ++j) {
            const auto codes = CharVocab::encode(lits[i][j]);
            std::copy(codes.begin(), codes.end(), e.chars.begin() + static_cast<std::ptrdiff_t>((i * e.literals + j) * e.width));
        }
    }
    return e;
}

EncodedQuery encode_query(const Atom& query) {
    if (!query.is_ground()) throw std::invalid_argument("query must be ground: " + render(query));
    return {CharVocab::encode(render(query))};
}

std::pair<EncodedContext, EncodedQuery> encode(const Program& context, const Atom& query) {
    return {encode_context(context), encode_query(query)};
}

std::pair<EncodedContext, EncodedQuery> encode(const Sample& sample, const Atom& query) {
    return encode(sample.context, query);
}

// ---------------------------------------------------------------------------
// Variant names

std::string to_string(AttentionVariant v) { return v == AttentionVariant::softmax ? "softmax" : "sigmoid"; }
std::string to_string(EmbeddingVariant v) { return v == EmbeddingVariant::literal ? "literal" : "lit_rule"; }
std::string to_string(UnifierDirection v) { return v == UnifierDirection::forward ? "forward" : "reversed"; }

AttentionVariant parse_attention_variant(std::string_view s) {
    if (s == "softmax") return AttentionVariant::softmax;
    if (s == "sigmoid") return AttentionVariant::sigmoid;
    throw std::invalid_argument("unknown attention variant '" + std::string(s) + "' (softmax|sigmoid)");
}

EmbeddingVariant parse_embedding_variant(std::string_view s) {
    if (s == "literal") return EmbeddingVariant::literal;
    if (s == "lit_rule") return EmbeddingVariant::lit_rule;
    throw std::invalid_argument("unknown embedding variant '" + std::string(s) + "' (literal|lit_rule)");
}

UnifierDirection parse_unifier_direction(std::string_view s) {
    if (s == "forward") return UnifierDirection::forward;
    if (s == "reversed") return UnifierDirection::reversed;
    throw std::invalid_argument("unknown unifier direction '" + std::string(s) + "' (forward|reversed)");
}

// ---------------------------------------------------------------------------
// Model

std::vector<double> Model::predict(const Sample& sample, int iterations) const {
    Tape tape(&params_, false);
    std::vector<double> out;
    for (Var p : forward(tape, sample, iterations)) out.push_back(tape.value(p).item());
    return out;
}

void ImaConfig::validate() const {
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("d must be even and >= 2, got " + std::to_string(d));
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
}

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::string meta_at(const Checkpoint& c, const std::string& key) {
    auto it = c.meta.find(key);
    if (it == c.meta.end()) throw std::runtime_error("checkpoint lacks meta key '" + key + "'");
    return it->second;
}

// Literal embeddings are shared between identical strings within one tape.
struct LiteralCache {
    std::map<std::vector<int>, Var> map;
};

}  // namespace

ImaModel::ImaModel(const ImaConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::stream(seed, 0x1a3a);
    build(rng);
}

ImaModel::ImaModel(const Checkpoint& c) {
    if (meta_at(c, "model") != "ima") throw std::runtime_error("checkpoint is not an IMA model");
    if (meta_at(c, "vocab") != std::to_string(CharVocab::kSize)) throw std::runtime_error("checkpoint vocabulary mismatch");
    cfg_.d = std::stoul(meta_at(c, "d"));
    cfg_.iterations = std::stoi(meta_at(c, "iterations"));
    cfg_.attention = parse_attention_variant(meta_at(c, "attention"));
    cfg_.embedding = parse_embedding_variant(meta_at(c, "embedding"));
    cfg_.unifier = parse_unifier_direction(meta_at(c, "unifier"));
    cfg_.attention_tanh = meta_at(c, "attention_tanh") == "1";
    cfg_.validate();
    Rng rng(0);
    build(rng);
    c.load_into(params_);
}

void ImaModel::build(Rng& rng) {
    const std::size_t d = cfg_.d;
    GruParams::create(params_, "embed", CharVocab::kSize, d, rng);
    if (cfg_.embedding == EmbeddingVariant::lit_rule) GruParams::create(params_, "rule", d, d, rng);
    params_.add("att.U", {d / 2, 5 * d}, fan_in_bound(5 * d), rng);
    params_.add("att.b1", {d / 2}, fan_in_bound(5 * d), rng);
    params_.add("att.W", {1, d / 2}, fan_in_bound(d / 2), rng);
    params_.add("att.b2", {1}, fan_in_bound(d / 2), rng);
    GruParams::create(params_, "unifier", d, d, rng);
    params_.add("blank", {d}, fan_in_bound(d), rng);
    params_.add("readout.w", {1, d}, fan_in_bound(d), rng);
    params_.add("readout.b", {1}, fan_in_bound(d), rng);
    bind();
}

void ImaModel::bind() {
    embed_gru_ = GruParams::find(params_, "embed");
    unifier_gru_ = GruParams::find(params_, "unifier");
    if (params_.contains("rule.Wz")) rule_gru_ = GruParams::find(params_, "rule");
    att_U_ = params_.index("att.U");
    att_b1_ = params_.index("att.b1");
    att_W_ = params_.index("att.W");
    att_b2_ = params_.index("att.b2");
    blank_ = params_.index("blank");
    readout_w_ = params_.index("readout.w");
    readout_b_ = params_.index("readout.b");
}

std::string ImaModel::name() const {
    std::string n = "ima-" + to_string(cfg_.attention) + "-" + to_string(cfg_.embedding);
    if (cfg_.unifier == UnifierDirection::reversed) n += "-rev";
    return n + "-d" + std::to_string(cfg_.d);
}

Var ImaModel::embed_literal(Tape& t, const std::vector<int>& chars) const {
    if (chars.empty()) throw std::invalid_argument("embed_literal: empty literal");
    Var h = t.constant(Tensor({cfg_.d}));
    for (auto it = chars.rbegin(); it != chars.rend(); ++it) {
        if (*it == CharVocab::kPad) continue;
        h = gru_cell_onehot(t, static_cast<std::size_t>(*it), h, embed_gru_);
    }
    return h;
}

Var ImaModel::embed_rule(Tape& t, const std::vector<Var>& literal_embeddings) const {
    if (literal_embeddings.empty()) throw std::invalid_argument("embed_rule: no literals");
    if (!rule_gru_) throw std::logic_error("embed_rule needs the lit_rule embedding variant");
    Var h = t.constant(Tensor({cfg_.d}));
    for (Var l : literal_embeddings) h = gru_cell(t, l, h, *rule_gru_);
    return h;
}

ImaModel::Context ImaModel::embed_context(Tape& t, const EncodedContext& ctx) const {
    Context c;
    c.null_slot = ctx.null_slot();
    c.blank_slot = ctx.blank_slot();
    LiteralCache cache;
    for (std::size_t i = 0; i < ctx.rules; ++i) {
        std::vector<Var> lits;
        for (std::size_t j = 0; j < ctx.literal_counts[i]; ++j) {
            auto chars = ctx.literal(i, j);
            auto it = cache.map.find(chars);
            if (it == cache.map.end()) it = cache.map.emplace(chars, embed_literal(t, chars)).first;
            lits.push_back(it->second);
        }
        c.heads.push_back(cfg_.embedding == EmbeddingVariant::literal ? lits.at(0) : embed_rule(t, lits));
        c.literals.push_back(std::move(lits));
    }
    c.heads.push_back(t.constant(Tensor({cfg_.d})));
    c.literals.emplace_back();
    const Var blank = t.param(blank_);
    c.heads.push_back(blank);
    c.literals.push_back({blank});
    return c;
}

Var ImaModel::attention_features(Tape& t, Var s, Var q, Var r) const {
    return concat(t, {s, q, r, square(t, subtract(t, s, r)), elemwise_mul(t, s, r)});
}

Var ImaModel::attention_logit(Tape& t, Var s, Var q, Var r) const {
    Var h = add(t, matmul(t, t.param(att_U_), attention_features(t, s, q, r)), t.param(att_b1_));
    if (cfg_.attention_tanh) h = tanh(t, h);
    return add(t, matmul(t, t.param(att_W_), h), t.param(att_b2_));
}

Var ImaModel::unify(Tape& t, Var s, const Context& c, std::size_t slot) const {
    if (slot == c.null_slot) return s;
    const auto& lits = c.literals.at(slot);
    Var u = s;
    if (cfg_.unifier == UnifierDirection::forward) {
        for (Var l : lits) u = gru_cell(t, l, u, unifier_gru_);
    } else {
        for (auto it = lits.rbegin(); it != lits.rend(); ++it) u = gru_cell(t, *it, u, unifier_gru_);
    }
    return u;
}

ImaModel::Step ImaModel::step(Tape& t, const Context& c, Var s, Var q, const Tensor* forced_attention) const {
    const std::size_t slots = c.heads.size();
    Var alpha;
    if (forced_attention) {
        if (forced_attention->rank() != 1 || forced_attention->size() != slots)
            throw ShapeMismatch("forced attention row must have " + std::to_string(slots) + " entries");
        alpha = t.constant(*forced_attention);
    } else {
        std::vector<Var> logits;
        logits.reserve(slots);
        for (Var r : c.heads) logits.push_back(attention_logit(t, s, q, r));
        const Var z = concat(t, logits);
        alpha = cfg_.attention == AttentionVariant::softmax ? softmax(t, z) : sigmoid(t, z);
    }
    std::vector<Var> us;
    us.reserve(slots);
    for (std::size_t i = 0; i < slots; ++i) us.push_back(unify(t, s, c, i));
    return {sum_weighted(t, us, alpha), alpha};
}

Var ImaModel::forward(Tape& t, const Context& c, Var q, int iterations, StepTrace* trace,
                      const AttentionOverride& override_attention) const {
    Var s = q;
    if (trace) {
        trace->attention.clear();
        trace->states.assign(1, t.value(s).data);
    }
    for (int it = 0; it < iterations; ++it) {
        std::optional<Tensor> forced;
        if (override_attention) forced = override_attention(it, c.heads.size());
        const Step st = step(t, c, s, q, forced ? &*forced : nullptr);
        s = st.state;
        if (trace) {
            trace->attention.push_back(t.value(st.attention).data);
            trace->states.push_back(t.value(s).data);
        }
    }
    return sigmoid(t, add(t, matmul(t, t.param(readout_w_), s), t.param(readout_b_)));
}

double ImaModel::probability(const Program& context, const Atom& query, int iterations, StepTrace* trace) const {
    Tape t(&params_, false);
    const Context c = embed_context(t, encode_context(context));
    const Var q = embed_literal(t, encode_query(query).chars);
    return t.value(forward(t, c, q, iterations, trace)).item();
}

std::vector<Var> ImaModel::forward(Tape& tape, const Sample& sample, int iterations) const {
    const Context c = embed_context(tape, encode_context(sample.context));
    std::vector<Var> out;
    for (const auto& ql : sample.queries) {
        const Var q = embed_literal(tape, encode_query(ql.query).chars);
        out.push_back(forward(tape, c, q, iterations));
    }
    return out;
}

Checkpoint ImaModel::checkpoint() const {
    Checkpoint c = Checkpoint::from_params(params_);
    c.meta["model"] = "ima";
    c.meta["vocab"] = std::to_string(CharVocab::kSize);
    c.meta["d"] = std::to_string(cfg_.d);
    c.meta["iterations"] = std::to_string(cfg_.iterations);
    c.meta["attention"] = to_string(cfg_.attention);
    c.meta["embedding"] = to_string(cfg_.embedding);
    c.meta["unifier"] = to_string(cfg_.unifier);
    c.meta["attention_tanh"] = cfg_.attention_tanh ? "1" : "0";
    return c;
}

// ---------------------------------------------------------------------------
// LSTM baseline

LstmBaseline::LstmBaseline(const LstmConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.d == 0) throw std::invalid_argument("d must be positive");
    Rng rng = Rng::stream(seed, 0x157d);
    LstmParams::create(params_, "lstm", CharVocab::kSize, cfg_.d, rng);
    params_.add("readout.w", {1, cfg_.d}, fan_in_bound(cfg_.d), rng);
    params_.add("readout.b", {1}, fan_in_bound(cfg_.d), rng);
    bind();
}

LstmBaseline::LstmBaseline(const Checkpoint& c) {
    if (meta_at(c, "model") != "lstm") throw std::runtime_error("checkpoint is not an LSTM baseline");
    if (meta_at(c, "vocab") != std::to_string(CharVocab::kSize)) throw std::runtime_error("checkpoint vocabulary mismatch");
    cfg_.d = std::stoul(meta_at(c, "d"));
    Rng rng(0);
    LstmParams::create(params_, "lstm", CharVocab::kSize, cfg_.d, rng);
    params_.add("readout.w", {1, cfg_.d}, 1.0, rng);
    params_.add("readout.b", {1}, 1.0, rng);
    c.load_into(params_);
    bind();
}

void LstmBaseline::bind() {
    lstm_ = LstmParams::find(params_, "lstm");
    readout_w_ = params_.index("readout.w");
    readout_b_ = params_.index("readout.b");
}

std::string LstmBaseline::name() const { return "lstm-d" + std::to_string(cfg_.d); }

std::vector<int> LstmBaseline::input_sequence(const Program& context, const Atom& query) {
    if (!query.is_ground()) throw std::invalid_argument("query must be ground: " + render(query));
    return CharVocab::encode(render(query) + ";" + render(context));
}

Var LstmBaseline::forward_query(Tape& t, const Program& context, const Atom& query) const {
    Var hc = t.constant(Tensor({2 * cfg_.d}));
    for (int c : input_sequence(context, query)) hc = lstm_cell_onehot(t, static_cast<std::size_t>(c), hc, lstm_);
    const Var h = slice(t, hc, 0, cfg_.d);
    return sigmoid(t, add(t, matmul(t, t.param(readout_w_), h), t.param(readout_b_)));
}

double LstmBaseline::probability(const Program& context, const Atom& query) const {
    Tape t(&params_, false);
    return t.value(forward_query(t, context, query)).item();
}

std::vector<Var> LstmBaseline::forward(Tape& tape, const Sample& sample, int) const {
    std::vector<Var> out;
    for (const auto& ql : sample.queries) out.push_back(forward_query(tape, sample.context, ql.query));
    return out;
}

Checkpoint LstmBaseline::checkpoint() const {
    Checkpoint c = Checkpoint::from_params(params_);
    c.meta["model"] = "lstm";
    c.meta["vocab"] = std::to_string(CharVocab::kSize);
    c.meta["d"] = std::to_string(cfg_.d);
    return c;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& c) {
    const std::string kind = meta_at(c, "model");
    if (kind == "ima") return std::make_unique<ImaModel>(c);
    if (kind == "lstm") return std::make_unique<LstmBaseline>(c);
    throw std::runtime_error("unknown model kind '" + kind + "' in checkpoint");
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

void save_model(const std::filesystem::path& path, const Model& m) { save_checkpoint(path, m.checkpoint()); }

}  // namespace lpnet
