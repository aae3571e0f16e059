#include "lpnet/oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "exemplars.hpp"

namespace lpnet {
namespace {

Atom A(std::string_view s) { return parse_atom(s); }

TEST(Unify, RepeatedVariableBindsOnce) {
    auto s = unify(A("o(V,V)"), A("o(d,d)"));
    ASSERT_TRUE(s.has_value());
    EXPECT_EQ(s->size(), 1u);
    EXPECT_EQ(s->resolve(Term::variable("V")), Term::constant("d"));
}

TEST(Unify, RepeatedVariableRejectsDistinctConstants) { EXPECT_FALSE(unify(A("o(V,V)"), A("o(b,d)")).has_value()); }

TEST(Unify, IdenticalGroundAtomsGiveEmptySubstitution) {
    auto s = unify(A("p(a)"), A("p(a)"));
    ASSERT_TRUE(s.has_value());
    EXPECT_TRUE(s->empty());
}

TEST(Unify, PredicateAndArityClash) {
    EXPECT_FALSE(unify(A("p(a)"), A("q(a)")).has_value());
    EXPECT_FALSE(unify(A("p(X)"), A("p(a,b)")).has_value());
    EXPECT_FALSE(unify(A("p(a,X)"), A("p(b,c)")).has_value());
}

TEST(Unify, ExtendsExistingBindings) {
    Substitution s;
    s.bind("X", Term::constant("a"));
    EXPECT_FALSE(unify(A("p(X)"), A("p(b)"), s).has_value());
    auto ok = unify(A("p(X,Y)"), A("p(a,Z)"), s);
    ASSERT_TRUE(ok.has_value());
    EXPECT_EQ(ok->resolve(Term::variable("Y")), ok->resolve(Term::variable("Z")));
}

TEST(Unify, VariableChainsResolve) {
    auto s = unify(A("p(X,X,Y)"), A("p(Y,Z,c)"));
    ASSERT_TRUE(s.has_value());
    for (const char* v : {"X", "Y", "Z"}) EXPECT_EQ(s->resolve(Term::variable(v)), Term::constant("c")) << v;
}

TEST(ApplySubst, Examples) {
    Substitution s;
    s.bind("X", Term::constant("a"));
    EXPECT_EQ(apply_subst(s, Literal{A("q(X)"), false}), (Literal{A("q(a)"), false}));
    EXPECT_EQ(apply_subst(Substitution{}, Literal{A("r(X)"), true}), (Literal{A("r(X)"), true}));
    Substitution t;
    t.bind("Y", Term::constant("t"));
    EXPECT_EQ(apply_subst(t, A("p(X,Y)")), A("p(X,t)"));
}

TEST(ApplySubst, IdempotentAfterResolution) {
    auto s = unify(A("p(X,Y,Z)"), A("p(Y,Z,k)"));
    ASSERT_TRUE(s.has_value());
    const Atom once = apply_subst(*s, A("q(X,Y,Z,W)"));
    EXPECT_EQ(apply_subst(*s, once), once);
    EXPECT_EQ(once, A("q(k,k,k,W)"));
}

TEST(Entails, ExemplarLabels) {
    for (const auto& ex : testing::kExemplars) {
        const Program c = parse_program(ex.context);
        for (auto q : {ex.positive, ex.negative}) {
            const QueryLine ql = parse_query_line(q);
            EXPECT_EQ(entails(c, ql.query), ql.target) << "task " << ex.task << " " << q;
        }
    }
}

TEST(Entails, EmptyProgram) {
    EXPECT_EQ(entails(Program{}, A("p(a)")), 0);
    EXPECT_EQ(solve_literal(Program{}, Literal{A("p(a)"), true}), 1);
}

TEST(SolveLiteral, NegationByFailure) {
    const Program c = parse_program(testing::kExemplars[0].context);
    EXPECT_EQ(solve_literal(c, Literal{A("e(l)"), true}), 0);
    EXPECT_EQ(solve_literal(c, Literal{A("i(d)"), true}), 1);
}

TEST(Entails, NonGroundQueryRejected) { EXPECT_THROW(entails(Program{}, A("p(X)")), std::invalid_argument); }

TEST(Entails, FloundersOnNonGroundNegation) {
    const Program c = parse_program("p(a) :- -q(X).");
    EXPECT_THROW(entails(c, A("p(a)")), FloundersError);
}

TEST(Entails, DepthLimit) {
    std::string text = "pa(a).";
    for (char c = 'b'; c <= 'k'; ++c) text += "\np" + std::string(1, c) + "(X) :- p" + std::string(1, c - 1) + "(X).";
    const Program c = parse_program(text);
    EXPECT_EQ(entails(c, A("pk(a)")), 1);
    EXPECT_THROW(entails(c, A("pk(a)"), SolverLimits{5, true}), DepthExceeded);
}

TEST(Entails, PathLoopCheckCutsPositiveCycles) {
    const Program c = parse_program("p(X) :- p(X).\np(X) :- q(X).\nq(a).");
    EXPECT_EQ(entails(c, A("p(a)")), 1);
    EXPECT_EQ(entails(c, A("p(b)")), 0);
    EXPECT_THROW(entails(c, A("p(b)"), SolverLimits{64, false}), DepthExceeded);
}

TEST(Entails, BacktracksThroughConjunctions) {
    const Program c = parse_program("f(A,W) :- q(A,P) , d(P,W).\nq(h,s).\nq(h,t).\nd(t,j).");
    EXPECT_EQ(entails(c, A("f(h,j)")), 1);
}

TEST(FixpointModel, Examples) {
    EXPECT_EQ(fixpoint_model(parse_program("q(a).")), (std::set<Atom>{A("q(a)")}));
    const auto m = fixpoint_model(parse_program(testing::kExemplars[3].context));
    EXPECT_TRUE(m.count(A("x(k,k)")));
    EXPECT_FALSE(m.count(A("x(k,s)")));
}

TEST(FixpointModel, RejectsNegativeCycle) {
    EXPECT_THROW(fixpoint_model(parse_program("p(a) :- -q(a).\nq(a) :- -p(a).")), NotStratified);
}

TEST(FixpointModel, AgreesWithEntailsOnExemplars) {
    for (const auto& ex : testing::kExemplars) {
        const Program c = parse_program(ex.context);
        std::vector<std::string> extra;
        for (auto q : {ex.positive, ex.negative})
            for (const auto& t : parse_query_line(q).query.args) extra.push_back(t.name);
        const auto model = fixpoint_model(c, extra);
        const Solver solver(c);
        for (const Atom& g : ground_query_space(c, extra))
            EXPECT_EQ(solver.entails(g), model.count(g) == 1) << "task " << ex.task << " " << render(g);
    }
}

TEST(GroundQuerySpace, EnumeratesPerPredicateArity) {
    const Program c = parse_program("p(a,b).\nq(X) :- p(X,X).");
    // p/2 over {a,b}: 4 atoms; q/1: 2 atoms.
    EXPECT_EQ(ground_query_space(c).size(), 6u);
    EXPECT_EQ(ground_query_space(c, {"z"}).size(), 9u + 3u);
}

// Rule order and consistent variable renaming never change labels.
TEST(Entails, OrderAndRenamingInsensitive) {
    std::mt19937_64 rng(99);
    for (const auto& ex : testing::kExemplars) {
        Program c = parse_program(ex.context);
        std::vector<Atom> queries = ground_query_space(c, {"zz"});
        const Solver base(c);
        std::vector<bool> expected;
        for (const auto& q : queries) expected.push_back(base.entails(q));
        for (int trial = 0; trial < 5; ++trial) {
            Program shuffled = c;
            std::shuffle(shuffled.rules.begin(), shuffled.rules.end(), rng);
            for (auto& r : shuffled.rules) {
                auto rename = [](Atom& a) {
                    for (auto& t : a.args)
                        if (t.is_variable()) t.name = "Q" + t.name;
                };
                rename(r.head);
                for (auto& l : r.body) rename(l.atom);
            }
            const Solver s(shuffled);
            for (std::size_t i = 0; i < queries.size(); ++i)
                ASSERT_EQ(s.entails(queries[i]), expected[i]) << render(queries[i]);
        }
    }
}

}  // namespace
}  // namespace lpnet
