#include "lpnet/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gradcheck.hpp"

namespace lpnet {
namespace {

using testing::check_param_grads;

std::string decode(const std::vector<int>& chars) {
    std::string s;
    for (int c : chars) s += CharVocab::symbol(c);
    return s;
}

ImaConfig small(std::size_t d = 16, int T = 2) {
    ImaConfig c;
    c.d = d;
    c.iterations = T;
    return c;
}

TEST(CharVocab, LayoutAndInjectivity) {
    EXPECT_EQ(CharVocab::kSize, 63u);
    EXPECT_EQ(CharVocab::index('a'), 1);
    EXPECT_EQ(CharVocab::index('z'), 26);
    EXPECT_EQ(CharVocab::index('A'), 27);
    EXPECT_EQ(CharVocab::index('Z'), 52);
    EXPECT_EQ(CharVocab::index('('), 53);
    EXPECT_EQ(CharVocab::index(';'), 62);
    std::set<int> seen;
    for (int i = 1; i < 63; ++i) {
        EXPECT_EQ(CharVocab::index(CharVocab::symbol(i)), i);
        seen.insert(i);
    }
    EXPECT_EQ(seen.size(), 62u);
    EXPECT_THROW(CharVocab::index('0'), UnknownCharacter);
    EXPECT_THROW(CharVocab::index('_'), UnknownCharacter);
    EXPECT_THROW(CharVocab::symbol(0), std::out_of_range);
}

TEST(Encode, SingleFact) {
    const auto [ctx, q] = encode(parse_program("q(a)."), parse_atom("q(a)"));
    EXPECT_EQ(ctx.rules, 1u);
    EXPECT_EQ(ctx.slots(), 3u);
    EXPECT_EQ(ctx.literals, 1u);
    EXPECT_EQ(decode(ctx.literal(0, 0)), "q(a)");
    EXPECT_EQ(decode(q.chars), "q(a)");
    EXPECT_EQ(ctx.literal_counts[ctx.null_slot()], 0u);
    EXPECT_EQ(decode(ctx.literal(ctx.blank_slot(), 0)), "()");
}

TEST(Encode, NegationStaysInsideLiteral) {
    const auto [ctx, q] = encode(parse_program("p(X) :- q(X) , -r(X)."), parse_atom("p(a)"));
    EXPECT_EQ(ctx.literals, 3u);
    EXPECT_EQ(decode(ctx.literal(0, 0)), "p(X)");
    EXPECT_EQ(decode(ctx.literal(0, 1)), "q(X)");
    EXPECT_EQ(decode(ctx.literal(0, 2)), "-r(X)");
}

TEST(Encode, PaddingOnlyAtTail) {
    const Program p = parse_program("abc(X,Y) :- q(X).\nr(a).\ns(bb,c) :- -t(c) , u(bb).");
    const auto ctx = encode_context(p);
    EXPECT_EQ(ctx.width, 8u);
    for (std::size_t i = 0; i < ctx.slots(); ++i)
        for (std::size_t j = 0; j < ctx.literals; ++j) {
            bool padded = false;
            for (std::size_t k = 0; k < ctx.width; ++k) {
                if (ctx.at(i, j, k) == 0) padded = true;
                else EXPECT_FALSE(padded) << i << "," << j << "," << k;
            }
            EXPECT_EQ(j < ctx.literal_counts[i], ctx.at(i, j, 0) != 0);
        }
    EXPECT_EQ(decode(ctx.literal(1, 0)), "r(a)");  // heads at literal 0
    EXPECT_THROW(encode_query(parse_atom("p(X)")), std::invalid_argument);
}

// Case-preserving renaming changes characters only.
TEST(Encode, RenamingKeepsShapesAndPseudoSlots) {
    const Program a = parse_program("p(X) :- q(X) , -r(X).\nq(a).");
    const Program b = parse_program("z(Q) :- y(Q) , -x(Q).\ny(b).");
    const auto ea = encode_context(a), eb = encode_context(b);
    EXPECT_EQ(ea.slots(), eb.slots());
    EXPECT_EQ(ea.literals, eb.literals);
    EXPECT_EQ(ea.width, eb.width);
    EXPECT_EQ(ea.literal_counts, eb.literal_counts);
    EXPECT_EQ(ea.literal(ea.blank_slot(), 0), eb.literal(eb.blank_slot(), 0));
    EXPECT_NE(ea.chars, eb.chars);
}

TEST(EmbedLiteral, ShapeDeterminismAndSensitivity) {
    const ImaModel m(small(), 1);
    Tape t(&m.params(), false);
    std::string s;
    for (int n = 1; n <= 64; ++n) {
        s += 'p';
        EXPECT_EQ(t.value(m.embed_literal(t, CharVocab::encode(s))).size(), 16u);
    }
    const Tensor a1 = t.value(m.embed_literal(t, CharVocab::encode("p(a)")));
    const Tensor a2 = t.value(m.embed_literal(t, CharVocab::encode("p(a)")));
    const Tensor b = t.value(m.embed_literal(t, CharVocab::encode("p(b)")));
    EXPECT_EQ(a1, a2);
    EXPECT_NE(a1, b);
}

TEST(EmbedLiteral, ReadsCharactersInReverseAndSkipsPadding) {
    const ImaModel m(small(), 2);
    Tape t(&m.params(), false);
    const auto& ps = m.params();
    const GruParams g = GruParams::find(ps, "embed");
    Var h = t.constant(Tensor({16}));
    for (char c : std::string(")a(p")) h = gru_cell_onehot(t, static_cast<std::size_t>(CharVocab::index(c)), h, g);
    EXPECT_EQ(t.value(m.embed_literal(t, CharVocab::encode("p(a)"))), t.value(h));
    std::vector<int> padded = CharVocab::encode("p(a)");
    padded.push_back(0);
    padded.push_back(0);
    EXPECT_EQ(t.value(m.embed_literal(t, padded)), t.value(h));
}

TEST(EmbedRule, OneStepOrderSensitiveAndLiteralVariantUsesHead) {
    ImaConfig cfg = small();
    cfg.embedding = EmbeddingVariant::lit_rule;
    const ImaModel m(cfg, 3);
    Tape t(&m.params(), false);
    const Var l0 = m.embed_literal(t, CharVocab::encode("p(X)"));
    const Var l1 = m.embed_literal(t, CharVocab::encode("q(X)"));
    const Var l2 = m.embed_literal(t, CharVocab::encode("-r(X)"));
    const Var one = m.embed_rule(t, {l0});
    const Var manual = gru_cell(t, l0, t.constant(Tensor({16})), GruParams::find(m.params(), "rule"));
    EXPECT_EQ(t.value(one), t.value(manual));
    EXPECT_NE(t.value(m.embed_rule(t, {l0, l1, l2})), t.value(m.embed_rule(t, {l0, l2, l1})));

    const ImaModel lit(small(), 3);
    Tape t2(&lit.params(), false);
    const auto ctx = lit.embed_context(t2, encode_context(parse_program("p(X) :- q(X).")));
    EXPECT_EQ(ctx.heads[0].id, ctx.literals[0][0].id);
    EXPECT_THROW(lit.embed_rule(t2, {ctx.heads[0]}), std::logic_error);
}

TEST(Attention, FeatureLayout) {
    const ImaModel m(small(), 4);
    Tape t(&m.params(), false);
    Rng rng(5);
    auto rv = [&] {
        Tensor x({16});
        for (double& v : x.data) v = rng.uniform(-1, 1);
        return t.constant(x);
    };
    const Var s = rv(), q = rv();
    const Tensor ca = t.value(m.attention_features(t, s, q, s));
    ASSERT_EQ(ca.size(), 80u);
    for (std::size_t i = 48; i < 64; ++i) EXPECT_EQ(ca[i], 0.0);
    for (std::size_t i = 64; i < 80; ++i) EXPECT_EQ(ca[i], t.value(s)[i - 64] * t.value(s)[i - 64]);
    EXPECT_EQ(t.value(m.attention_logit(t, s, q, s)).size(), 1u);
}

const char* kThreeRules = "p(X) :- q(X) , -r(X).\nq(a).\nr(b).";

TEST(Unify, NullBlankAndDirection) {
    const ImaModel m(small(), 6);
    Tape t(&m.params(), false);
    const auto c = m.embed_context(t, encode_context(parse_program(kThreeRules)));
    const Var s = m.embed_literal(t, CharVocab::encode("p(a)"));
    EXPECT_EQ(m.unify(t, s, c, c.null_slot).id, s.id);
    const GruParams u = GruParams::find(m.params(), "unifier");
    EXPECT_EQ(t.value(m.unify(t, s, c, 1)), t.value(gru_cell(t, c.literals[1][0], s, u)));
    EXPECT_EQ(t.value(m.unify(t, s, c, c.blank_slot)), t.value(gru_cell(t, t.param(m.params().index("blank")), s, u)));
    Var fwd = s;
    for (Var l : c.literals[0]) fwd = gru_cell(t, l, fwd, u);
    EXPECT_EQ(t.value(m.unify(t, s, c, 0)), t.value(fwd));

    ImaConfig rc = small();
    rc.unifier = UnifierDirection::reversed;
    const ImaModel rm(rc, 6);
    Tape t2(&rm.params(), false);
    const auto c2 = rm.embed_context(t2, encode_context(parse_program(kThreeRules)));
    const Var s2 = rm.embed_literal(t2, CharVocab::encode("p(a)"));
    Var rev = s2;
    for (auto it = c2.literals[0].rbegin(); it != c2.literals[0].rend(); ++it) rev = gru_cell(t2, *it, rev, u);
    EXPECT_EQ(t2.value(rm.unify(t2, s2, c2, 0)), t2.value(rev));
}

TEST(Step, ForcedAttentionRows) {
    for (auto variant : {AttentionVariant::softmax, AttentionVariant::sigmoid}) {
        ImaConfig cfg = small();
        cfg.attention = variant;
        const ImaModel m(cfg, 7);
        Tape t(&m.params(), false);
        const auto c = m.embed_context(t, encode_context(parse_program(kThreeRules)));
        const Var q = m.embed_literal(t, CharVocab::encode("p(a)"));
        const std::size_t n = c.heads.size();
        ASSERT_EQ(n, 5u);

        Tensor null_row({n});
        null_row[c.null_slot] = 1.0;
        EXPECT_EQ(t.value(m.step(t, c, q, q, &null_row).state), t.value(q));

        for (std::size_t k = 0; k < n; ++k) {
            Tensor row({n});
            row[k] = 1.0;
            EXPECT_EQ(t.value(m.step(t, c, q, q, &row).state), t.value(m.unify(t, q, c, k))) << k;
        }
        const Tensor zeros({n});
        for (double v : t.value(m.step(t, c, q, q, &zeros).state).data) EXPECT_EQ(v, 0.0);
        const Tensor wrong({n + 1});
        EXPECT_THROW(m.step(t, c, q, q, &wrong), ShapeMismatch);
    }
}

TEST(Forward, ZeroIterationsIsReadoutOfQuery) {
    const ImaModel m(small(), 8);
    const Program p = parse_program(kThreeRules);
    const Atom qa = parse_atom("p(a)");
    Tape t(&m.params(), false);
    const Tensor q = t.value(m.embed_literal(t, encode_query(qa).chars));
    const auto& w = m.params()[m.params().index("readout.w")].value;
    double z = m.params()[m.params().index("readout.b")].value[0];
    for (std::size_t i = 0; i < 16; ++i) z += w[i] * q[i];
    EXPECT_NEAR(m.probability(p, qa, 0), 1.0 / (1.0 + std::exp(-z)), 1e-15);
}

TEST(Forward, TraceShapesAndRanges) {
    for (auto variant : {AttentionVariant::softmax, AttentionVariant::sigmoid}) {
        ImaConfig cfg = small(16, 4);
        cfg.attention = variant;
        const ImaModel m(cfg, 9);
        StepTrace tr;
        const double p = m.probability(parse_program(kThreeRules), parse_atom("p(a)"), 4, &tr);
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
        ASSERT_EQ(tr.attention.size(), 4u);
        ASSERT_EQ(tr.states.size(), 5u);
        for (const auto& row : tr.attention) {
            ASSERT_EQ(row.size(), 5u);
            double sum = 0;
            for (double a : row) {
                EXPECT_GT(a, 0.0);
                EXPECT_LT(a, 1.0);
                sum += a;
            }
            if (variant == AttentionVariant::softmax) EXPECT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Forward, IterationIdentityUnderNullAttention) {
    const ImaModel m(small(16, 6), 10);
    Tape t(&m.params(), false);
    const auto c = m.embed_context(t, encode_context(parse_program(kThreeRules)));
    const Var q = m.embed_literal(t, CharVocab::encode("p(a)"));
    StepTrace tr;
    m.forward(t, c, q, 6, &tr, [&](int, std::size_t n) {
        Tensor row({n});
        row[c.null_slot] = 1.0;
        return std::optional<Tensor>(row);
    });
    for (const auto& s : tr.states) EXPECT_EQ(s, tr.states.front());
}

TEST(Forward, ShapeStabilityAcrossPrograms) {
    const ImaModel m(small(), 11);
    for (const char* text : {"a(b).", "p(X) :- q(X).\nq(a).", "long(X,Y) :- b(X) , -c(Y) , d(X,Y).\nb(a).\nd(a,e).",
                             "pppppppppppppppppppp(qqqqqqqqqqqqqqqqqqqq)."}) {
        const Program p = parse_program(text);
        const double v = m.probability(p, parse_atom("b(a)"), 3);
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_NO_THROW(m.probability(Program{}, parse_atom("b(a)"), 2));
}

TEST(Forward, SampleInterfaceMatchesProbability) {
    const ImaModel m(small(), 12);
    Sample s;
    s.context = parse_program(kThreeRules);
    s.queries = {parse_query_line("? p(a). 1"), parse_query_line("? p(b). 0")};
    const auto probs = m.predict(s, 2);
    ASSERT_EQ(probs.size(), 2u);
    EXPECT_EQ(probs[0], m.probability(s.context, s.queries[0].query, 2));
    EXPECT_EQ(probs[1], m.probability(s.context, s.queries[1].query, 2));
    EXPECT_EQ(m.predict(s, 2), probs);
}

// End-to-end reverse-mode gradients against central differences.
void expect_gradients(const ImaConfig& cfg, double tol) {
    ImaModel m(cfg, 13);
    const Program p = parse_program(kThreeRules);
    const auto enc = encode_context(p);
    const auto q = encode_query(parse_atom("p(a)")).chars;
    const auto r = check_param_grads(m.params(), [&](Tape& t) {
        const auto c = m.embed_context(t, enc);
        return bce_loss(t, m.forward(t, c, m.embed_literal(t, q), cfg.iterations), 1);
    });
    EXPECT_LE(r.max_rel, tol) << r.worst;
}

TEST(Gradients, SoftmaxLiteral) { expect_gradients(small(16, 2), 1e-3); }

TEST(Gradients, SigmoidLitRuleReversedTanh) {
    ImaConfig cfg = small(8, 2);
    cfg.attention = AttentionVariant::sigmoid;
    cfg.embedding = EmbeddingVariant::lit_rule;
    cfg.unifier = UnifierDirection::reversed;
    cfg.attention_tanh = true;
    expect_gradients(cfg, 1e-3);
}

TEST(Lstm, InputSequenceAndRange) {
    const Program p = parse_program("e(l).\ni(u).");
    EXPECT_EQ(decode(LstmBaseline::input_sequence(p, parse_atom("e(l)"))), "e(l);e(l).\ni(u).");
    const LstmBaseline m({8}, 14);
    const double v = m.probability(p, parse_atom("e(l)"));
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_EQ(v, m.probability(p, parse_atom("e(l)")));
}

TEST(Lstm, Gradients) {
    LstmBaseline m({6}, 15);
    const Program p = parse_program("e(l).\ni(u).");
    const auto r = check_param_grads(m.params(), [&](Tape& t) {
        return bce_loss(t, m.forward_query(t, p, parse_atom("i(l)")), 0);
    });
    EXPECT_LE(r.max_rel, 1e-3) << r.worst;
}

TEST(Checkpointing, ModelsRoundTrip) {
    ImaConfig cfg = small(10, 3);
    cfg.embedding = EmbeddingVariant::lit_rule;
    cfg.unifier = UnifierDirection::reversed;
    const ImaModel ima(cfg, 16);
    const LstmBaseline lstm({6}, 16);
    Sample s;
    s.context = parse_program(kThreeRules);
    s.queries = {parse_query_line("? p(a). 1")};
    for (const Model* m : {static_cast<const Model*>(&ima), static_cast<const Model*>(&lstm)}) {
        std::stringstream ss;
        write_checkpoint(ss, m->checkpoint());
        const auto back = model_from_checkpoint(read_checkpoint(ss));
        EXPECT_EQ(back->name(), m->name());
        EXPECT_EQ(back->predict(s, 3), m->predict(s, 3));
        EXPECT_EQ(back->default_iterations(), m->default_iterations());
    }
    Checkpoint bad = ima.checkpoint();
    bad.meta["model"] = "mystery";
    EXPECT_THROW(model_from_checkpoint(bad), std::runtime_error);
}

TEST(Config, Validation) {
    EXPECT_THROW(ImaModel(small(15), 1), std::invalid_argument);
    EXPECT_THROW(parse_attention_variant("relu"), std::invalid_argument);
    EXPECT_EQ(parse_embedding_variant("lit_rule"), EmbeddingVariant::lit_rule);
    EXPECT_EQ(ImaModel(small(), 1).name(), "ima-softmax-literal-d16");
}

TEST(Determinism, SameSeedSameParams) {
    const ImaModel a(small(), 77), b(small(), 77), c(small(), 78);
    for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
    EXPECT_NE(a.params()[0].value, c.params()[0].value);
}

}  // namespace
}  // namespace lpnet
