#include "lpnet/taskgen.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lpnet/oracle.hpp"

namespace lpnet {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("lpnet_taskgen_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

TEST(GenSymbol, ForcedLastChoice) {
    std::set<std::string> used;
    for (char c = 'a'; c <= 'y'; ++c) used.insert(std::string(1, c));
    Rng rng(3);
    EXPECT_EQ(gen_symbol(rng, 1, 1, used), "z");
    EXPECT_THROW(gen_symbol(rng, 1, 1, used), CapacityExhausted);
}

TEST(GenSymbol, FixedLength) {
    std::set<std::string> used;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const std::string s = gen_symbol(rng, 2, 2, used);
        ASSERT_EQ(s.size(), 2u);
        ASSERT_TRUE(is_constant_name(s));
    }
    EXPECT_TRUE(is_variable_name(gen_symbol(rng, 1, 3, used, true)));
}

// Lengths 1..2 hold 26 + 676 symbols; every draw is fresh until the space is exhausted.
TEST(GenSymbol, ExhaustsShortRangeExactly) {
    std::set<std::string> used;
    Rng rng(11);
    for (int i = 0; i < 702; ++i) ASSERT_NO_THROW(gen_symbol(rng, 1, 2, used)) << i;
    EXPECT_EQ(used.size(), 702u);
    EXPECT_THROW(gen_symbol(rng, 1, 2, used), CapacityExhausted);
}

TEST(GenSymbol, TenThousandDistinctDraws) {
    std::set<std::string> used;
    Rng rng(17);
    std::set<std::string> seen;
    for (int i = 0; i < 10000; ++i) ASSERT_TRUE(seen.insert(gen_symbol(rng, 1, 4, used)).second);
}

void collect_symbols(const Atom& a, std::vector<std::string>& preds, std::vector<std::string>& consts) {
    preds.push_back(a.predicate);
    for (const auto& t : a.args)
        if (!t.is_variable()) consts.push_back(t.name);
}

class TaskInvariants : public ::testing::TestWithParam<int> {};

TEST_P(TaskInvariants, GeneratedSamplesSatisfyContract) {
    const int task = GetParam();
    GenConfig cfg;
    cfg.task_id = task;
    cfg.seed = 42;
    for (std::uint64_t i = 0; i < 150; ++i) {
        const Sample s = generate_indexed_sample(cfg, i);
        ASSERT_EQ(s.task_id, task);
        ASSERT_EQ(s.queries.size(), 2u);
        EXPECT_EQ(s.queries[0].target + s.queries[1].target, 1);

        // Labels against both the resolution prover and the stratified model.
        std::vector<std::string> extra;
        for (const auto& q : s.queries)
            for (const auto& t : q.query.args) extra.push_back(t.name);
        const auto model = fixpoint_model(s.context, extra);
        const Solver solver(s.context);
        for (const auto& q : s.queries) {
            ASSERT_EQ(solver.entails(q.query) ? 1 : 0, q.target) << render(s);
            ASSERT_EQ(model.count(q.query) ? 1 : 0, q.target) << render(s);
        }

        // Noise isolation.
        Program core;
        for (std::size_t r = 0; r < s.context.rules.size(); ++r)
            if (std::find(s.noise.begin(), s.noise.end(), r) == s.noise.end()) core.rules.push_back(s.context.rules[r]);
        EXPECT_EQ(s.noise.size(), static_cast<std::size_t>(cfg.noise_rules));
        const Solver core_solver(core);
        for (const auto& q : s.queries) ASSERT_EQ(core_solver.entails(q.query) ? 1 : 0, q.target) << render(s);

        // Symbol discipline: lowercase, length range, arity 1..2.
        std::vector<std::string> preds, consts;
        for (const auto& r : s.context.rules) {
            collect_symbols(r.head, preds, consts);
            for (const auto& l : r.body) collect_symbols(l.atom, preds, consts);
            ASSERT_GE(r.head.arity(), 1u);
            ASSERT_LE(r.head.arity(), 2u);
            for (const auto& l : r.body) ASSERT_LE(l.atom.arity(), 2u);
        }
        for (const auto& q : s.queries) collect_symbols(q.query, preds, consts);
        for (const auto& sym : preds) {
            ASSERT_TRUE(is_constant_name(sym));
            ASSERT_LE(sym.size(), 2u);
        }
        for (const auto& sym : consts) {
            ASSERT_TRUE(is_constant_name(sym));
            ASSERT_LE(sym.size(), 2u);
        }

        // Only the branching tasks define one predicate by several proper rules,
        // and no predicate is defined both by a proper rule and by a fact.
        if (task != 7 && task != 12) {
            std::map<std::string, int> proper, facts;
            for (const auto& r : s.context.rules) {
                const std::string key = r.head.predicate + "/" + std::to_string(r.head.arity());
                ++(r.is_fact() ? facts : proper)[key];
            }
            for (const auto& [k, n] : proper) {
                EXPECT_EQ(n, 1) << k << "\n" << render(s);
                EXPECT_EQ(facts.count(k), 0u) << k << "\n" << render(s);
            }
        }
    }
}

TEST_P(TaskInvariants, Deterministic) {
    GenConfig cfg;
    cfg.task_id = GetParam();
    cfg.seed = 9;
    for (std::uint64_t i = 0; i < 10; ++i)
        EXPECT_EQ(render(generate_indexed_sample(cfg, i)), render(generate_indexed_sample(cfg, i)));
}

INSTANTIATE_TEST_SUITE_P(AllTasks, TaskInvariants, ::testing::Range(1, kNumTasks + 1));

TEST(Task1, PositiveQueryIsAFact) {
    GenConfig cfg;
    cfg.task_id = 1;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const Sample s = generate_indexed_sample(cfg, i);
        for (const auto& r : s.context.rules) EXPECT_TRUE(r.is_fact() && r.head.is_ground());
        const Atom& pos = s.queries[0].query;
        EXPECT_TRUE(std::any_of(s.context.rules.begin(), s.context.rules.end(),
                                [&](const Rule& r) { return r.head == pos; }));
    }
}

// Follow single-literal rules from the query predicate down to a fact.
int chain_length(const Program& p, const std::string& pred) {
    int steps = 0;
    std::string cur = pred;
    while (true) {
        auto it = std::find_if(p.rules.begin(), p.rules.end(),
                               [&](const Rule& r) { return r.head.predicate == cur && !r.is_fact(); });
        if (it == p.rules.end()) return steps;
        cur = it->body.at(0).atom.predicate;
        ++steps;
    }
}

TEST(Task5, ThreeRuleChainEndingInFact) {
    GenConfig cfg;
    cfg.task_id = 5;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const Sample s = generate_indexed_sample(cfg, i);
        const Atom& pos = s.queries[0].query;
        EXPECT_EQ(chain_length(s.context, pos.predicate), 3) << render(s);
        for (const auto& r : s.context.rules)
            if (!r.is_fact() && r.head.predicate == pos.predicate) {
                for (const auto& t : r.head.args) EXPECT_TRUE(t.is_variable());
            }
    }
}

TEST(TaskTemplates, StructuralShapes) {
    GenConfig cfg;
    cfg.noise_rules = 0;
    auto count_proper = [](const Sample& s, std::size_t body_len) {
        return std::count_if(s.context.rules.begin(), s.context.rules.end(),
                             [&](const Rule& r) { return r.body.size() == body_len; });
    };
    for (std::uint64_t i = 0; i < 30; ++i) {
        cfg.task_id = 2;
        const Sample unif = generate_indexed_sample(cfg, i);
        EXPECT_TRUE(std::any_of(unif.context.rules.begin(), unif.context.rules.end(),
                                [](const Rule& r) { return r.is_fact() && !r.head.is_ground(); }));
        cfg.task_id = 6;
        EXPECT_EQ(count_proper(generate_indexed_sample(cfg, i), 2), 1);
        cfg.task_id = 7;
        const Sample orr = generate_indexed_sample(cfg, i);
        const std::string p = orr.queries[0].query.predicate;
        EXPECT_EQ(std::count_if(orr.context.rules.begin(), orr.context.rules.end(),
                                [&](const Rule& r) { return r.head.predicate == p; }),
                  3);
        cfg.task_id = 9;
        const Sample nbf = generate_indexed_sample(cfg, i);
        EXPECT_TRUE(std::any_of(nbf.context.rules.begin(), nbf.context.rules.end(),
                                [](const Rule& r) { return r.body.size() == 1 && r.body[0].negated; }));
        cfg.task_id = 11;
        const Sample andn = generate_indexed_sample(cfg, i);
        EXPECT_TRUE(std::any_of(andn.context.rules.begin(), andn.context.rules.end(), [](const Rule& r) {
            return r.body.size() == 2 && (r.body[0].negated != r.body[1].negated);
        }));
    }
}

TEST(GenConfig, Validation) {
    GenConfig cfg;
    cfg.task_id = 13;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.task_id = 1;
    cfg.symbol_len_min = 3;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg.symbol_len_min = 1;
    cfg.chain_steps = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Tiers, Ordered) {
    const auto& t = difficulty_tiers();
    ASSERT_EQ(t.size(), 4u);
    for (std::size_t i = 1; i < t.size(); ++i) {
        EXPECT_LT(t[i - 1].max_symbol_len, t[i].max_symbol_len);
        EXPECT_LE(t[i - 1].extra_noise, t[i].extra_noise);
    }
    EXPECT_EQ(tier_by_name("hard").max_symbol_len, 12);
    EXPECT_THROW(tier_by_name("impossible"), std::invalid_argument);
}

std::vector<int> all_tasks() {
    std::vector<int> t;
    for (int i = 1; i <= kNumTasks; ++i) t.push_back(i);
    return t;
}

TEST(Dataset, ByteDeterministicAndThreadIndependent) {
    const fs::path dir = temp_dir("det");
    const auto cfgs = tier_configs(all_tasks(), tier_by_name("validation"), 7);
    generate_dataset(cfgs, 10, dir / "a.txt", "validation", 1);
    generate_dataset(cfgs, 10, dir / "b.txt", "validation", 1);
    generate_dataset(cfgs, 10, dir / "c.txt", "validation", 4);
    EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
    EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "c.txt"));
    EXPECT_EQ(slurp(dir / "a.txt.manifest"), slurp(dir / "b.txt.manifest"));
    EXPECT_FALSE(slurp(dir / "a.txt").empty());
}

TEST(Dataset, EasyTierSymbolLengthAndReverification) {
    const fs::path dir = temp_dir("easy");
    const auto cfgs = tier_configs(all_tasks(), tier_by_name("easy"), 3);
    const DatasetManifest m = generate_dataset(cfgs, 20, dir / "easy.txt", "easy");
    EXPECT_EQ(m.tier, "easy");
    const Dataset ds = read_dataset(dir / "easy.txt");
    ASSERT_EQ(ds.samples.size(), 240u);
    std::size_t longest = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        EXPECT_EQ(s.task_id, static_cast<int>(i / 20) + 1);
        const Solver solver(s.context);
        for (const auto& q : s.queries) ASSERT_EQ(solver.entails(q.query) ? 1 : 0, q.target);
        for (const auto& r : s.context.rules) {
            longest = std::max(longest, r.head.predicate.size());
            for (const auto& t : r.head.args)
                if (!t.is_variable()) ASSERT_LE(t.name.size(), 4u);
        }
        ASSERT_LE(longest, 4u);
    }
    EXPECT_GT(longest, 2u);
}

TEST(Dataset, TextRoundTrip) {
    GenConfig cfg;
    cfg.task_id = 8;
    const auto samples = generate_samples(cfg, 25);
    std::stringstream ss;
    write_samples(ss, samples);
    const auto back = parse_samples(ss.str());
    ASSERT_EQ(back.size(), samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].context, samples[i].context);
        EXPECT_EQ(back[i].queries, samples[i].queries);
    }
}

TEST(Dataset, FileFormatLayout) {
    Sample s;
    s.context = parse_program("e(l).\ni(u).");
    s.queries = {parse_query_line("? e(l). 1"), parse_query_line("? i(d). 0")};
    EXPECT_EQ(render(s), "e(l).\ni(u).\n? e(l). 1\n? i(d). 0\n\n");
}

TEST(Sweep, StepBucketsNeedExactlyNApplications) {
    const Dataset ds = generate_sweep_programs(SweepKind::steps, 32, 3, 5);
    const auto buckets = split_buckets(ds);
    ASSERT_EQ(buckets.size(), 32u);
    for (int n = 1; n <= 32; ++n) {
        for (const auto& s : buckets[static_cast<std::size_t>(n - 1)]) {
            const Atom& pos = s.queries[0].query;
            EXPECT_EQ(chain_length(s.context, pos.predicate), n);
            EXPECT_EQ(entails(s.context, pos, SolverLimits{n, true}), 1);
            if (n > 1) EXPECT_THROW(entails(s.context, pos, SolverLimits{n - 1, true}), DepthExceeded) << "n=" << n;
            const Solver solver(s.context);
            for (const auto& q : s.queries) ASSERT_EQ(solver.entails(q.query) ? 1 : 0, q.target);
        }
    }
}

TEST(Sweep, LengthBucketsReachSixtyFour) {
    const Dataset ds = generate_sweep_programs(SweepKind::length, 64, 2, 5);
    const auto buckets = split_buckets(ds);
    ASSERT_EQ(buckets.size(), 64u);
    for (int n = 1; n <= 64; ++n) {
        for (const auto& s : buckets[static_cast<std::size_t>(n - 1)]) {
            for (const auto& r : s.context.rules) ASSERT_EQ(r.head.predicate.size(), static_cast<std::size_t>(n));
            const Solver solver(s.context);
            for (const auto& q : s.queries) ASSERT_EQ(solver.entails(q.query) ? 1 : 0, q.target);
        }
    }
}

}  // namespace
}  // namespace lpnet
