#include "lpnet/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lpnet/oracle.hpp"
#include "lpnet/parallel.hpp"

namespace lpnet {

namespace {

constexpr int kMaxAttempts = 64;

std::vector<Term> reversed(std::vector<Term> v) {
    std::reverse(v.begin(), v.end());
    return v;
}

Atom make_atom(const std::string& pred, std::vector<Term> args) { return Atom{pred, std::move(args)}; }

std::vector<Term> as_terms(const std::vector<std::string>& vars) {
    std::vector<Term> out;
    for (const auto& v : vars) out.push_back(Term::variable(v));
    return out;
}

enum class NoiseKind { fact, var_fact, step, conj, neg_step };

std::vector<NoiseKind> noise_kinds(int task) {
    using K = NoiseKind;
    switch (task) {
        case 1: return {K::fact};
        case 2: return {K::fact, K::var_fact};
        case 6:
        case 8: return {K::fact, K::step, K::conj};
        case 9:
        case 10:
        case 12: return {K::fact, K::step, K::neg_step};
        case 11: return {K::fact, K::conj, K::neg_step};
        default: return {K::fact, K::step};
    }
}

// Collects the rules of one sample. Predicates are fresh per use; constants
// are drawn from a per-sample pool that grows on demand.
class Builder {
public:
    Builder(const GenConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

    Rng& rng() { return rng_; }
    int arity() { return rng_.range(1, 2); }

    std::string pred() { return gen_symbol(rng_, cfg_.symbol_len_min, cfg_.symbol_len_max, preds_); }

    std::string fresh_const() {
        std::string c = gen_symbol(rng_, cfg_.symbol_len_min, cfg_.symbol_len_max, consts_);
        pool_.push_back(c);
        return c;
    }

    std::string any_const() {
        if (!pool_.empty() && rng_.coin(0.3)) return rng_.pick(pool_);
        return fresh_const();
    }

    std::string other_const(const std::string& avoid) {
        for (int i = 0; i < 4; ++i) {
            std::string c = any_const();
            if (c != avoid) return c;
        }
        return fresh_const();
    }

    std::vector<Term> consts(int n) {
        std::vector<Term> out;
        while (static_cast<int>(out.size()) < n) {
            Term t = Term::constant(any_const());
            if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
        }
        return out;
    }

    /// `base` with one random position replaced by a different constant.
    std::vector<Term> perturb(std::vector<Term> base) {
        Term& t = base[rng_.below(base.size())];
        t = Term::constant(other_const(t.name));
        return base;
    }

    std::vector<std::string> vars(int n) {
        std::set<std::string> used;
        std::vector<std::string> out;
        for (int i = 0; i < n; ++i) out.push_back(gen_symbol(rng_, cfg_.var_len_min, cfg_.var_len_max, used, true));
        return out;
    }

    void core(Rule r) { core_.push_back(std::move(r)); }
    void fact(const std::string& pred, std::vector<Term> args) { core({make_atom(pred, std::move(args)), {}}); }

    struct Chain {
        std::vector<std::string> preds;  // preds[0] is the top, preds.back() the bottom
        int swaps = 0;

        /// Arguments at the top that resolve to `bottom` at the bottom.
        std::vector<Term> top_args(const std::vector<Term>& bottom) const {
            return swaps % 2 ? reversed(bottom) : bottom;
        }
    };

    /// `steps` variable-only rules p0 :- p1, ..., p(steps-1) :- p(steps).
    Chain chain(int steps, int arity) {
        Chain c;
        c.preds.push_back(pred());
        for (int i = 0; i < steps; ++i) {
            c.preds.push_back(pred());
            const auto v = vars(arity);
            std::vector<Term> body = as_terms(v);
            if (arity == 2 && rng_.coin(0.5)) {
                std::swap(body[0], body[1]);
                ++c.swaps;
            }
            core({make_atom(c.preds[i], as_terms(v)), {{make_atom(c.preds[i + 1], std::move(body)), false}}});
        }
        return c;
    }

    /// A body literal over a subset/permutation of `head_vars`.
    Literal body_literal(const std::string& pred, int arity, const std::vector<std::string>& head_vars,
                         bool negated = false) {
        std::vector<Term> args;
        if (arity == 1) {
            args.push_back(Term::variable(rng_.pick(head_vars)));
        } else {
            std::vector<std::string> v = head_vars;
            if (v.size() == 1) v.push_back(v[0]);
            rng_.shuffle(v.begin(), v.end());
            args = as_terms(v);
        }
        return {make_atom(pred, std::move(args)), negated};
    }

    /// Two body literals jointly covering every head variable.
    std::vector<Literal> two_literals(const std::vector<std::string>& head_vars) {
        const int a1 = static_cast<int>(head_vars.size()) == 1 ? 1 : arity();
        const int a2 = static_cast<int>(head_vars.size()) == 1 ? 1 : arity();
        Literal l1 = body_literal(pred(), a1, head_vars);
        Literal l2 = body_literal(pred(), a2, head_vars);
        if (head_vars.size() == 2 && a1 == 1 && a2 == 1) {
            const std::size_t i = rng_.below(2);
            l1.atom.args = {Term::variable(head_vars[i])};
            l2.atom.args = {Term::variable(head_vars[1 - i])};
        }
        return {l1, l2};
    }

    void add_noise(int count) {
        const auto kinds = noise_kinds(cfg_.task_id);
        for (int i = 0; i < count; ++i) {
            const NoiseKind k = rng_.pick(kinds);
            const int a = arity();
            const std::string p = pred();
            switch (k) {
                case NoiseKind::fact: noise_.push_back({make_atom(p, consts(a)), {}}); break;
                case NoiseKind::var_fact: {
                    const auto v = vars(2);
                    std::vector<Term> args{Term::variable(v[0])};
                    if (a == 2) {
                        const int shape = rng_.range(0, 2);
                        if (shape == 0) args.push_back(Term::variable(v[0]));
                        if (shape == 1) args.push_back(Term::variable(v[1]));
                        if (shape == 2) args.push_back(Term::constant(any_const()));
                        if (rng_.coin()) std::swap(args[0], args[1]);
                    }
                    noise_.push_back({make_atom(p, std::move(args)), {}});
                    break;
                }
                case NoiseKind::step:
                case NoiseKind::neg_step: {
                    const auto v = vars(a);
                    Literal body = body_literal(pred(), a, v, k == NoiseKind::neg_step);
                    noise_.push_back({make_atom(p, as_terms(v)), {body}});
                    break;
                }
                case NoiseKind::conj: {
                    const auto v = vars(a);
                    auto body = two_literals(v);
                    if (cfg_.task_id >= 9 && rng_.coin()) body[rng_.below(2)].negated = true;
                    noise_.push_back({make_atom(p, as_terms(v)), body});
                    break;
                }
            }
        }
    }

    Sample finish(Atom positive, Atom negative) {
        add_noise(cfg_.noise_rules);
        Sample s;
        s.task_id = cfg_.task_id;
        std::vector<std::pair<Rule, bool>> all;
        for (auto& r : core_) all.emplace_back(std::move(r), false);
        for (auto& r : noise_) all.emplace_back(std::move(r), true);
        rng_.shuffle(all.begin(), all.end());
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].second) s.noise.push_back(i);
            s.context.rules.push_back(std::move(all[i].first));
        }
        s.queries = {{std::move(positive), 1}, {std::move(negative), 0}};
        return s;
    }

private:
    const GenConfig& cfg_;
    Rng& rng_;
    std::set<std::string> preds_;
    std::set<std::string> consts_;
    std::vector<std::string> pool_;
    std::vector<Rule> core_;
    std::vector<Rule> noise_;
};

using Queries = std::pair<Atom, Atom>;

Queries task_facts(Builder& b) {
    const int a = b.arity();
    const std::string p = b.pred();
    const auto args = b.consts(a);
    b.fact(p, args);
    Atom neg;
    switch (b.rng().below(3)) {
        case 0: neg = make_atom(p, b.perturb(args)); break;  // constant mismatch
        case 1: {                                             // predicate mismatch
            const std::string q = b.pred();
            b.fact(q, b.perturb(args));
            neg = make_atom(q, args);
            break;
        }
        default: neg = make_atom(b.pred(), args);  // not in the context at all
    }
    return {make_atom(p, args), neg};
}

Queries task_unification(Builder& b) {
    const std::string p = b.pred();
    const auto v = b.vars(2);
    const Term X = Term::variable(v[0]);
    const Term Y = Term::variable(v[1]);
    switch (b.rng().below(3)) {
        case 0: {  // p(X,X) against distinct constants
            b.fact(p, {X, X});
            const Term c = Term::constant(b.any_const());
            const Term d = Term::constant(b.other_const(c.name));
            return {make_atom(p, {c, c}), make_atom(p, {c, d})};
        }
        case 1: {  // p(X,c) with a mismatching constant
            const Term c = Term::constant(b.any_const());
            const bool first = b.rng().coin();
            b.fact(p, first ? std::vector<Term>{c, X} : std::vector<Term>{X, c});
            const Term e = Term::constant(b.other_const(c.name));
            const Term d = Term::constant(b.other_const(c.name));
            auto inst = [&](const Term& k) { return first ? std::vector<Term>{k, e} : std::vector<Term>{e, k}; };
            return {make_atom(p, inst(c)), make_atom(p, inst(d))};
        }
        default: {  // predicate mismatch against a ground distractor
            const int a = b.arity();
            std::vector<Term> head;
            if (a == 1) {
                head = {X};
            } else {
                head = b.rng().coin() ? std::vector<Term>{X, Y} : std::vector<Term>{X, X};
            }
            b.fact(p, head);
            std::vector<Term> args = b.consts(a);
            if (a == 2 && head[0] == head[1]) args[1] = args[0];
            const std::string q = b.pred();
            b.fact(q, b.perturb(args));
            return {make_atom(p, args), make_atom(q, args)};
        }
    }
}

Queries task_deduction(Builder& b, int steps) {
    const int a = b.arity();
    const auto chain = b.chain(steps, a);
    const auto bottom = b.consts(a);
    b.fact(chain.preds.back(), bottom);
    const auto top = chain.top_args(bottom);
    const Atom pos = make_atom(chain.preds.front(), top);

    const std::size_t modes = a == 2 ? 3 : 2;
    std::size_t mode = b.rng().below(modes);
    if (a == 1) ++mode;  // no swap mode for unary chains
    switch (mode) {
        case 0: return {pos, make_atom(chain.preds.front(), reversed(top))};
        case 1: return {pos, make_atom(chain.preds.front(), b.perturb(top))};
        default: {
            // A parallel chain whose last body literal fails as in the facts task.
            const auto other = b.chain(steps, a);
            if (b.rng().coin()) b.fact(other.preds.back(), b.perturb(bottom));
            return {pos, make_atom(other.preds.front(), other.top_args(bottom))};
        }
    }
}

Queries task_and(Builder& b) {
    const int ah = b.arity();
    const auto v = b.vars(ah);
    const std::string p = b.pred();
    const auto body = b.two_literals(v);
    b.core({make_atom(p, as_terms(v)), body});

    std::map<std::string, Term> theta;
    const auto c = b.consts(ah);
    for (int i = 0; i < ah; ++i) theta.emplace(v[i], c[i]);
    auto ground = [](const Atom& a, const std::map<std::string, Term>& th) {
        Atom out = a;
        for (auto& t : out.args)
            if (t.is_variable()) t = th.at(t.name);
        return out;
    };
    for (const auto& l : body) b.core({ground(l.atom, theta), {}});

    const std::size_t fail = b.rng().below(2);
    const auto& fvars = body[fail].atom.args;
    const std::string var = fvars[b.rng().below(fvars.size())].name;
    auto theta2 = theta;
    theta2[var] = Term::constant(b.other_const(theta.at(var).name));
    const Atom kept = ground(body[1 - fail].atom, theta2);
    if (kept != ground(body[1 - fail].atom, theta)) b.core({kept, {}});

    return {ground(make_atom(p, as_terms(v)), theta), ground(make_atom(p, as_terms(v)), theta2)};
}

Queries task_or(Builder& b) {
    const int a = b.arity();
    const std::string p = b.pred();
    std::vector<std::string> bodies{b.pred(), b.pred()};
    bool swapped[2] = {false, false};
    for (int k = 0; k < 2; ++k) {
        const auto v = b.vars(a);
        swapped[k] = a == 2 && b.rng().coin();
        const auto args = as_terms(v);
        b.core({make_atom(p, args), {{make_atom(bodies[k], swapped[k] ? reversed(args) : args), false}}});
    }
    auto body_args = [&](int k, const std::vector<Term>& head) { return swapped[k] ? reversed(head) : head; };
    const auto ground_head = b.consts(a);
    b.fact(p, ground_head);

    const std::size_t branch = b.rng().below(3);
    std::vector<Term> pos = branch == 2 ? ground_head : b.consts(a);
    if (branch < 2) b.fact(bodies[branch], body_args(static_cast<int>(branch), pos));

    for (int k = 0; k < 2; ++k) {
        if (static_cast<std::size_t>(k) == branch) continue;
        switch (b.rng().below(3)) {
            case 0: b.fact(bodies[k], b.consts(a)); break;
            case 1: b.fact(bodies[k], b.consts(3 - a)); break;  // same predicate, other arity
            default: break;
        }
    }
    return {make_atom(p, pos), make_atom(p, b.consts(a))};
}

Queries task_transitivity(Builder& b) {
    const std::string p = b.pred();
    const std::string q = b.pred();
    const std::string r = b.pred();
    const auto v = b.vars(3);
    const Term X = Term::variable(v[0]), Y = Term::variable(v[1]), Z = Term::variable(v[2]);
    b.core({make_atom(p, {X, Z}), {{make_atom(q, {X, Y}), false}, {make_atom(r, {Y, Z}), false}}});

    const auto c = b.consts(3);
    b.fact(q, {c[0], c[1]});
    b.fact(r, {c[1], c[2]});

    const Term d = Term::constant(b.other_const(c[0].name));
    const Term g = Term::constant(b.other_const(c[2].name));
    switch (b.rng().below(3)) {
        case 0: {  // inner variable does not join
            const Term e = Term::constant(b.any_const());
            const Term f = Term::constant(b.other_const(e.name));
            b.fact(q, {d, e});
            b.fact(r, {f, g});
            break;
        }
        case 1: b.fact(r, {Term::constant(b.any_const()), g}); break;  // no q(d,_)
        default: b.fact(q, {d, Term::constant(b.any_const())}); break;  // no r(_,g) after q
    }
    return {make_atom(p, {c[0], c[2]}), make_atom(p, {d, g})};
}

Queries task_nbf_chain(Builder& b, int steps) {
    const int a = b.arity();
    const std::string top = b.pred();
    const auto inner = b.chain(steps - 1, a);
    const auto v = b.vars(a);
    std::vector<Term> body = as_terms(v);
    const bool swapped = a == 2 && b.rng().coin();
    if (swapped) std::swap(body[0], body[1]);
    b.core({make_atom(top, as_terms(v)), {{make_atom(inner.preds.front(), body), true}}});

    const auto bottom = b.consts(a);
    b.fact(inner.preds.back(), bottom);
    auto proven = inner.top_args(bottom);
    if (swapped) proven = reversed(proven);

    const Atom neg = make_atom(top, proven);
    const bool swap_mode = a == 2 && b.rng().coin();
    const Atom pos = make_atom(top, swap_mode ? reversed(proven) : b.perturb(proven));
    return {pos, neg};
}

Queries task_and_nbf(Builder& b) {
    const int ah = b.arity();
    const auto v = b.vars(ah);
    const std::string p = b.pred();
    auto body = b.two_literals(v);
    const std::size_t negi = b.rng().below(2);
    body[negi].negated = true;
    if (b.rng().coin()) std::swap(body[0], body[1]);
    const Literal& negl = body[0].negated ? body[0] : body[1];
    const Literal& posl = body[0].negated ? body[1] : body[0];
    b.core({make_atom(p, as_terms(v)), body});

    auto ground = [](const Atom& a, const std::map<std::string, Term>& th) {
        Atom out = a;
        for (auto& t : out.args)
            if (t.is_variable()) t = th.at(t.name);
        return out;
    };
    std::map<std::string, Term> theta;
    const auto c = b.consts(ah);
    for (int i = 0; i < ah; ++i) theta.emplace(v[i], c[i]);
    b.core({ground(posl.atom, theta), {}});

    auto theta2 = theta;
    if (b.rng().coin()) {
        // The negated atom holds.
        const auto& args = negl.atom.args;
        const std::string var = args[b.rng().below(args.size())].name;
        theta2[var] = Term::constant(b.other_const(theta.at(var).name));
        b.core({ground(negl.atom, theta2), {}});
        const Atom kept = ground(posl.atom, theta2);
        if (kept != ground(posl.atom, theta)) b.core({kept, {}});
    } else {
        // The positive literal fails; a distractor for the negated predicate.
        const auto& args = posl.atom.args;
        const std::string var = args[b.rng().below(args.size())].name;
        theta2[var] = Term::constant(b.other_const(theta.at(var).name));
        b.core({make_atom(negl.atom.predicate, b.consts(static_cast<int>(negl.atom.arity()))), {}});
    }
    return {ground(make_atom(p, as_terms(v)), theta), ground(make_atom(p, as_terms(v)), theta2)};
}

Queries task_or_nbf(Builder& b) {
    const int a = b.arity();
    const std::string p = b.pred();
    const std::string n = b.pred();
    const std::string q = b.pred();
    const auto v1 = b.vars(a);
    const auto v2 = b.vars(a);
    const bool swap_n = a == 2 && b.rng().coin();
    const bool swap_q = a == 2 && b.rng().coin();
    b.core({make_atom(p, as_terms(v1)), {{make_atom(n, swap_n ? reversed(as_terms(v1)) : as_terms(v1)), true}}});
    b.core({make_atom(p, as_terms(v2)), {{make_atom(q, swap_q ? reversed(as_terms(v2)) : as_terms(v2)), false}}});
    const auto ground_head = b.consts(a);
    b.fact(p, ground_head);
    auto n_args = [&](const std::vector<Term>& h) { return swap_n ? reversed(h) : h; };
    auto q_args = [&](const std::vector<Term>& h) { return swap_q ? reversed(h) : h; };

    std::vector<Term> pos;
    switch (b.rng().below(3)) {
        case 0: pos = b.consts(a); break;  // through the negated rule
        case 1:
            pos = b.consts(a);
            b.fact(q, q_args(pos));
            b.fact(n, n_args(pos));
            break;
        default:
            pos = ground_head;
            b.fact(n, n_args(pos));
            break;
    }
    const auto neg = b.consts(a);
    b.fact(n, n_args(neg));
    if (b.rng().coin()) b.fact(q, b.perturb(q_args(neg)));
    return {make_atom(p, pos), make_atom(p, neg)};
}

Queries build_task(Builder& b, const GenConfig& cfg) {
    switch (cfg.task_id) {
        case 1: return task_facts(b);
        case 2: return task_unification(b);
        case 3:
        case 4:
        case 5: return task_deduction(b, cfg.effective_chain_steps());
        case 6: return task_and(b);
        case 7: return task_or(b);
        case 8: return task_transitivity(b);
        case 9:
        case 10: return task_nbf_chain(b, cfg.effective_chain_steps());
        case 11: return task_and_nbf(b);
        case 12: return task_or_nbf(b);
        default: throw std::invalid_argument("unknown task " + std::to_string(cfg.task_id));
    }
}

std::size_t capacity(int len) {
    double c = std::pow(26.0, len);
    return c > 1e15 ? static_cast<std::size_t>(1e15) : static_cast<std::size_t>(c);
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

std::string_view task_name(int task_id) {
    static constexpr std::string_view names[] = {"Facts",        "Unification", "1 Step",      "2 Steps",
                                                 "3 Steps",      "AND",         "OR",          "Transitivity",
                                                 "1 Step NBF",   "2 Steps NBF", "AND NBF",     "OR NBF"};
    if (task_id < 1 || task_id > kNumTasks) throw std::invalid_argument("task id out of range");
    return names[task_id - 1];
}

void GenConfig::validate() const {
    if (task_id < 1 || task_id > kNumTasks) throw std::invalid_argument("task_id must be in 1..12");
    if (symbol_len_min < 1 || symbol_len_min > symbol_len_max)
        throw std::invalid_argument("invalid symbol length range");
    if (var_len_min < 1 || var_len_min > var_len_max) throw std::invalid_argument("invalid variable length range");
    if (noise_rules < 0) throw std::invalid_argument("noise_rules must be non-negative");
    if (chain_steps && *chain_steps < 1) throw std::invalid_argument("chain_steps must be >= 1");
}

int GenConfig::effective_chain_steps() const {
    if (chain_steps) return *chain_steps;
    switch (task_id) {
        case 3: return 1;
        case 4: return 2;
        case 5: return 3;
        case 9: return 1;
        case 10: return 2;
        default: return 1;
    }
}

const std::vector<DifficultyTier>& difficulty_tiers() {
    static const std::vector<DifficultyTier> tiers{
        {"validation", 2, 2}, {"easy", 4, 2}, {"medium", 8, 4}, {"hard", 12, 8}};
    return tiers;
}

const DifficultyTier& tier_by_name(std::string_view name) {
    for (const auto& t : difficulty_tiers())
        if (t.name == name) return t;
    throw std::invalid_argument("unknown tier '" + std::string(name) + "'");
}

std::string gen_symbol(Rng& rng, int len_min, int len_max, std::set<std::string>& used, bool upper) {
    if (len_min < 1 || len_min > len_max) throw std::invalid_argument("gen_symbol: bad length range");
    const char base = upper ? 'A' : 'a';
    std::vector<int> lengths;
    for (int l = len_min; l <= len_max; ++l) lengths.push_back(l);

    std::map<int, std::size_t> used_per_len;
    for (const auto& s : used) ++used_per_len[static_cast<int>(s.size())];

    while (!lengths.empty()) {
        const std::size_t li = rng.below(lengths.size());
        const int len = lengths[li];
        const std::size_t cap = capacity(len);
        const std::size_t taken = used_per_len[len];
        if (taken >= cap) {
            lengths.erase(lengths.begin() + static_cast<std::ptrdiff_t>(li));
            continue;
        }
        if (taken * 2 < cap) {
            // Rejection sampling is cheap while at least half the space is free.
            while (true) {
                std::string s(static_cast<std::size_t>(len), base);
                for (auto& ch : s) ch = static_cast<char>(base + rng.below(26));
                if (used.insert(s).second) return s;
            }
        }
        std::vector<std::string> free;
        std::string s(static_cast<std::size_t>(len), base);
        while (true) {
            if (!used.count(s)) free.push_back(s);
            int k = len - 1;
            while (k >= 0 && s[static_cast<std::size_t>(k)] == base + 25) s[static_cast<std::size_t>(k--)] = base;
            if (k < 0) break;
            ++s[static_cast<std::size_t>(k)];
        }
        std::string pick = free[rng.below(free.size())];
        used.insert(pick);
        return pick;
    }
    throw CapacityExhausted("no fresh symbol of length " + std::to_string(len_min) + ".." + std::to_string(len_max));
}

Sample generate_sample(const GenConfig& cfg, Rng& rng) {
    cfg.validate();
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Builder b(cfg, rng);
        auto [pos, neg] = build_task(b, cfg);
        if (pos == neg) continue;
        Sample s = b.finish(std::move(pos), std::move(neg));
        const Solver solver(s.context);
        bool ok = true;
        for (const auto& q : s.queries) ok = ok && (solver.entails(q.query) ? 1 : 0) == q.target;
        if (ok) return s;
    }
    throw GenerationFailed("task " + std::to_string(cfg.task_id) + ": labels did not verify after " +
                           std::to_string(kMaxAttempts) + " attempts");
}

Sample generate_indexed_sample(const GenConfig& cfg, std::uint64_t index) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(cfg.task_id), index);
    return generate_sample(cfg, rng);
}

std::vector<Sample> generate_samples(const GenConfig& cfg, std::size_t count, unsigned threads) {
    cfg.validate();
    std::vector<Sample> out(count);
    parallel_for(count, threads, [&](std::size_t i) { out[i] = generate_indexed_sample(cfg, i); });
    return out;
}

std::vector<GenConfig> tier_configs(const std::vector<int>& tasks, const DifficultyTier& tier, std::uint64_t seed) {
    std::vector<GenConfig> out;
    for (int t : tasks) {
        GenConfig c;
        c.task_id = t;
        c.symbol_len_min = 1;
        c.symbol_len_max = tier.max_symbol_len;
        c.noise_rules = tier.extra_noise;
        c.seed = seed;
        out.push_back(c);
    }
    return out;
}

std::map<std::string, std::string> DatasetManifest::to_map() const {
    std::map<std::string, std::string> kv{
        {"generator", "lpnet-taskgen"},
        {"generator_version", std::to_string(generator_version)},
        {"tier", tier},
        {"seed", std::to_string(seed)},
        {"tasks", join_ints(tasks)},
        {"count_per_task", std::to_string(count_per_task)},
        {"symbol_len_min", std::to_string(symbol_len_min)},
        {"symbol_len_max", std::to_string(symbol_len_max)},
        {"noise_rules", std::to_string(noise_rules)},
    };
    if (!sweep_kind.empty()) {
        kv["sweep_kind"] = sweep_kind;
        kv["buckets"] = join_ints(buckets);
    }
    return kv;
}

DatasetManifest DatasetManifest::from_map(const std::map<std::string, std::string>& kv) {
    DatasetManifest m;
    auto get = [&](const char* k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("tier")) m.tier = *v;
    if (auto v = get("seed")) m.seed = std::stoull(*v);
    if (auto v = get("tasks")) m.tasks = split_ints(*v);
    if (auto v = get("count_per_task")) m.count_per_task = std::stoull(*v);
    if (auto v = get("symbol_len_min")) m.symbol_len_min = std::stoi(*v);
    if (auto v = get("symbol_len_max")) m.symbol_len_max = std::stoi(*v);
    if (auto v = get("noise_rules")) m.noise_rules = std::stoi(*v);
    if (auto v = get("generator_version")) m.generator_version = std::stoi(*v);
    if (auto v = get("sweep_kind")) m.sweep_kind = *v;
    if (auto v = get("buckets")) m.buckets = split_ints(*v);
    return m;
}

Dataset generate_dataset(const std::vector<GenConfig>& cfgs, std::size_t count_per_task, unsigned threads) {
    Dataset ds;
    ds.manifest.count_per_task = count_per_task;
    if (!cfgs.empty()) {
        ds.manifest.seed = cfgs.front().seed;
        ds.manifest.symbol_len_min = cfgs.front().symbol_len_min;
        ds.manifest.symbol_len_max = cfgs.front().symbol_len_max;
        ds.manifest.noise_rules = cfgs.front().noise_rules;
    }
    for (const auto& c : cfgs) {
        ds.manifest.tasks.push_back(c.task_id);
        auto part = generate_samples(c, count_per_task, threads);
        std::move(part.begin(), part.end(), std::back_inserter(ds.samples));
    }
    return ds;
}

DatasetManifest generate_dataset(const std::vector<GenConfig>& cfgs, std::size_t count_per_task,
                                 const std::filesystem::path& out_path, const std::string& tier, unsigned threads) {
    Dataset ds = generate_dataset(cfgs, count_per_task, threads);
    ds.manifest.tier = tier;
    write_dataset(out_path, ds);
    return ds.manifest;
}

std::string render(const Sample& s) {
    std::string out;
    for (const auto& r : s.context.rules) out += render(r) + "\n";
    for (const auto& q : s.queries) out += render(q) + "\n";
    out += "\n";
    return out;
}

void write_samples(std::ostream& os, const std::vector<Sample>& samples) {
    for (const auto& s : samples) os << render(s);
}

std::vector<Sample> parse_samples(std::string_view text) {
    std::vector<Sample> out;
    Sample cur;
    bool open = false;
    std::size_t line_no = 0;
    auto flush = [&] {
        if (open) out.push_back(std::move(cur));
        cur = Sample{};
        open = false;
    };
    while (!text.empty()) {
        ++line_no;
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            flush();
        } else {
            open = true;
            try {
                if (line.front() == '?')
                    cur.queries.push_back(parse_query_line(line));
                else
                    cur.context.rules.push_back(parse_rule(line));
            } catch (const SyntaxError& e) {
                throw SyntaxError(e.what(), line_no, e.column());
            }
        }
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    flush();
    return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    for (const auto& [k, v] : m.to_map()) os << k << '=' << v << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return DatasetManifest::from_map(kv);
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        write_samples(os, ds.samples);
        if (!os) throw std::runtime_error("write failed: " + path.string());
    }
    write_manifest(path.string() + ".manifest", ds.manifest);
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    Dataset ds;
    ds.samples = parse_samples(buf.str());
    const std::filesystem::path mpath = path.string() + ".manifest";
    if (std::filesystem::exists(mpath)) {
        ds.manifest = read_manifest(mpath);
        const std::size_t per = ds.manifest.count_per_task;
        if (per > 0 && ds.manifest.sweep_kind.empty()) {
            for (std::size_t i = 0; i < ds.samples.size(); ++i) {
                const std::size_t group = i / per;
                if (group < ds.manifest.tasks.size()) ds.samples[i].task_id = ds.manifest.tasks[group];
            }
        } else if (!ds.manifest.tasks.empty()) {
            for (auto& s : ds.samples) s.task_id = ds.manifest.tasks.front();
        }
    }
    return ds;
}

Dataset generate_sweep_programs(SweepKind kind, int n_max, std::size_t per_bucket, std::uint64_t seed,
                                unsigned threads) {
    if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
    Dataset ds;
    ds.manifest.tier = "validation";
    ds.manifest.seed = seed;
    ds.manifest.tasks = {3};
    ds.manifest.count_per_task = per_bucket;
    ds.manifest.sweep_kind = kind == SweepKind::steps ? "steps" : "length";
    for (int n = 1; n <= n_max; ++n) {
        GenConfig cfg;
        cfg.task_id = 3;
        cfg.seed = Rng::splitmix(seed ^ (static_cast<std::uint64_t>(n) << 32));
        if (kind == SweepKind::steps) {
            cfg.chain_steps = n;
        } else {
            cfg.symbol_len_min = cfg.symbol_len_max = n;
        }
        ds.manifest.buckets.push_back(n);
        auto part = generate_samples(cfg, per_bucket, threads);
        std::move(part.begin(), part.end(), std::back_inserter(ds.samples));
    }
    return ds;
}

std::vector<std::vector<Sample>> split_buckets(const Dataset& ds) {
    const std::size_t per = ds.manifest.count_per_task;
    std::vector<std::vector<Sample>> out(ds.manifest.buckets.size());
    for (std::size_t i = 0; i < ds.samples.size() && per > 0; ++i) {
        const std::size_t b = i / per;
        if (b < out.size()) out[b].push_back(ds.samples[i]);
    }
    return out;
}

}  // namespace lpnet
