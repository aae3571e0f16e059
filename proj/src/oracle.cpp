#include "lpnet/oracle.hpp"

#include <algorithm>
#include <functional>
#include <memory>

namespace lpnet {

namespace {

std::string pred_key(const Atom& a) { return a.predicate + "/" + std::to_string(a.arity()); }

}  // namespace

// Substitution

const Term* Substitution::lookup(const std::string& var) const {
    auto it = bindings_.find(var);
    return it == bindings_.end() ? nullptr : &it->second;
}

Term Substitution::resolve(const Term& t) const {
    Term cur = t;
    while (cur.is_variable()) {
        const Term* next = lookup(cur.name);
        if (!next) break;
        cur = *next;
    }
    return cur;
}

void Substitution::bind(const std::string& var, Term value) {
    if (value.is_variable() && value.name == var) return;
    bindings_[var] = std::move(value);
}

bool Substitution::operator==(const Substitution& other) const {
    auto resolved = [](const Substitution& s) {
        std::map<std::string, Term> out;
        for (const auto& [var, _] : s.bindings_) {
            Term t = s.resolve(Term::variable(var));
            if (!(t.is_variable() && t.name == var)) out.emplace(var, std::move(t));
        }
        return out;
    };
    return resolved(*this) == resolved(other);
}

std::optional<Substitution> unify(const Atom& a, const Atom& b, Substitution s) {
    if (a.predicate != b.predicate || a.arity() != b.arity()) return std::nullopt;
    for (std::size_t i = 0; i < a.arity(); ++i) {
        const Term x = s.resolve(a.args[i]);
        const Term y = s.resolve(b.args[i]);
        if (x == y) continue;
        if (x.is_variable()) {
            s.bind(x.name, y);
        } else if (y.is_variable()) {
            s.bind(y.name, x);
        } else {
            return std::nullopt;
        }
    }
    return s;
}

Term apply_subst(const Substitution& s, const Term& t) { return s.resolve(t); }

Atom apply_subst(const Substitution& s, const Atom& a) {
    Atom out{a.predicate, {}};
    out.args.reserve(a.args.size());
    for (const auto& t : a.args) out.args.push_back(s.resolve(t));
    return out;
}

Literal apply_subst(const Substitution& s, const Literal& l) { return {apply_subst(s, l.atom), l.negated}; }

// Solver

struct Solver::Path {
    Atom goal;
    std::shared_ptr<const Path> parent;
};

class Solver::Search {
public:
    using PathPtr = std::shared_ptr<const Path>;
    using Cont = std::function<bool(const Substitution&)>;

    explicit Search(const Solver& solver) : solver_(solver) {}

    bool prove_ground(const Atom& goal, int depth, const PathPtr& path) {
        return solve(Literal{goal, false}, Substitution{}, depth, path, [](const Substitution&) { return true; });
    }

    bool solve(const Literal& lit, const Substitution& s, int depth, const PathPtr& path, const Cont& cont) {
        if (depth > solver_.limits_.max_depth)
            throw DepthExceeded("resolution depth exceeded " + std::to_string(solver_.limits_.max_depth));
        const Atom goal = apply_subst(s, lit.atom);
        if (lit.negated) {
            if (!goal.is_ground()) throw FloundersError("non-ground negated goal -" + render(goal));
            if (prove_ground(goal, depth + 1, path)) return false;
            return cont(s);
        }

        PathPtr next_path = path;
        if (solver_.limits_.path_loop_check && goal.is_ground()) {
            for (const Path* p = path.get(); p; p = p->parent.get())
                if (p->goal == goal) return false;
            next_path = std::make_shared<const Path>(Path{goal, path});
        }

        auto it = solver_.index_.find(pred_key(goal));
        if (it == solver_.index_.end()) return false;
        for (std::size_t ri : it->second) {
            const Rule renamed = rename(solver_.program_.rules[ri]);
            auto s2 = unify(renamed.head, goal, s);
            if (!s2) continue;
            if (solve_body(renamed.body, 0, *s2, depth + 1, next_path, cont)) return true;
        }
        return false;
    }

private:
    bool solve_body(const std::vector<Literal>& body, std::size_t i, const Substitution& s, int depth,
                    const PathPtr& path, const Cont& cont) {
        if (i == body.size()) return cont(s);
        return solve(body[i], s, depth, path,
                     [&](const Substitution& s2) { return solve_body(body, i + 1, s2, depth, path, cont); });
    }

    Rule rename(const Rule& r) {
        const std::string suffix = "_" + std::to_string(++counter_);
        auto rn = [&](Atom& a) {
            for (auto& t : a.args)
                if (t.is_variable()) t.name += suffix;
        };
        Rule out = r;
        rn(out.head);
        for (auto& l : out.body) rn(l.atom);
        return out;
    }

    const Solver& solver_;
    std::size_t counter_ = 0;
};

Solver::Solver(Program program, SolverLimits limits) : program_(std::move(program)), limits_(limits) {
    if (limits_.max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    for (std::size_t i = 0; i < program_.rules.size(); ++i) index_[pred_key(program_.rules[i].head)].push_back(i);
}

bool Solver::entails(const Atom& query) const {
    if (!query.is_ground()) throw std::invalid_argument("entails: query must be ground: " + render(query));
    Search search(*this);
    return search.prove_ground(query, 0, nullptr);
}

bool Solver::solve_literal(const Literal& lit) const {
    const bool pos = entails(lit.atom);
    return lit.negated ? !pos : pos;
}

int entails(const Program& c, const Atom& q, SolverLimits lim) { return Solver(c, lim).entails(q) ? 1 : 0; }

int solve_literal(const Program& c, const Literal& l, SolverLimits lim) {
    return Solver(c, lim).solve_literal(l) ? 1 : 0;
}

// Fixpoint model

std::vector<std::string> program_constants(const Program& c) {
    std::set<std::string> out;
    auto collect = [&](const Atom& a) {
        for (const auto& t : a.args)
            if (!t.is_variable()) out.insert(t.name);
    };
    for (const auto& r : c.rules) {
        collect(r.head);
        for (const auto& l : r.body) collect(l.atom);
    }
    return {out.begin(), out.end()};
}

namespace {

using Tuple = std::vector<std::string>;
using Relation = std::set<Tuple>;
using Model = std::map<std::string, Relation>;

std::map<std::string, int> stratify(const Program& c) {
    std::map<std::string, int> stratum;
    for (const auto& r : c.rules) {
        stratum.emplace(pred_key(r.head), 0);
        for (const auto& l : r.body) stratum.emplace(pred_key(l.atom), 0);
    }
    const int limit = static_cast<int>(stratum.size());
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : c.rules) {
            int& h = stratum[pred_key(r.head)];
            for (const auto& l : r.body) {
                const int need = stratum[pred_key(l.atom)] + (l.negated ? 1 : 0);
                if (h < need) {
                    h = need;
                    changed = true;
                    if (h > limit) throw NotStratified("program has a cycle through negation at " + r.head.predicate);
                }
            }
        }
    }
    return stratum;
}

class RuleGrounder {
public:
    RuleGrounder(const Rule& rule, const Model& model, const std::vector<std::string>& universe)
        : rule_(rule), model_(model), universe_(universe) {
        for (const auto& l : rule.body)
            (l.negated ? negative_ : positive_).push_back(&l.atom);
    }

    void run(Relation& out) {
        std::map<std::string, std::string> env;
        join(0, env, out);
    }

private:
    static bool match(const Atom& a, const Tuple& tup, std::map<std::string, std::string>& env,
                      std::vector<std::string>& added) {
        for (std::size_t i = 0; i < a.arity(); ++i) {
            const Term& t = a.args[i];
            if (!t.is_variable()) {
                if (t.name != tup[i]) return false;
                continue;
            }
            auto it = env.find(t.name);
            if (it == env.end()) {
                env.emplace(t.name, tup[i]);
                added.push_back(t.name);
            } else if (it->second != tup[i]) {
                return false;
            }
        }
        return true;
    }

    void join(std::size_t i, std::map<std::string, std::string>& env, Relation& out) {
        if (i == positive_.size()) {
            std::vector<std::string> free;
            auto note = [&](const Atom& a) {
                for (const auto& t : a.args)
                    if (t.is_variable() && !env.count(t.name) &&
                        std::find(free.begin(), free.end(), t.name) == free.end())
                        free.push_back(t.name);
            };
            note(rule_.head);
            for (const Atom* a : negative_) note(*a);
            enumerate(free, 0, env, out);
            return;
        }
        const Atom& a = *positive_[i];
        auto rel = model_.find(pred_key(a));
        if (rel == model_.end()) return;
        for (const Tuple& tup : rel->second) {
            std::vector<std::string> added;
            if (match(a, tup, env, added)) join(i + 1, env, out);
            for (const auto& v : added) env.erase(v);
        }
    }

    void enumerate(const std::vector<std::string>& free, std::size_t k, std::map<std::string, std::string>& env,
                   Relation& out) {
        if (k == free.size()) {
            for (const Atom* a : negative_) {
                auto rel = model_.find(pred_key(*a));
                if (rel != model_.end() && rel->second.count(ground(*a, env))) return;
            }
            out.insert(ground(rule_.head, env));
            return;
        }
        for (const auto& c : universe_) {
            env[free[k]] = c;
            enumerate(free, k + 1, env, out);
        }
        env.erase(free[k]);
    }

    static Tuple ground(const Atom& a, const std::map<std::string, std::string>& env) {
        Tuple tup;
        tup.reserve(a.arity());
        for (const auto& t : a.args) tup.push_back(t.is_variable() ? env.at(t.name) : t.name);
        return tup;
    }

    const Rule& rule_;
    const Model& model_;
    const std::vector<std::string>& universe_;
    std::vector<const Atom*> positive_;
    std::vector<const Atom*> negative_;
};

}  // namespace

std::set<Atom> fixpoint_model(const Program& c, const std::vector<std::string>& extra_constants) {
    const auto stratum = stratify(c);
    std::vector<std::string> universe = program_constants(c);
    universe.insert(universe.end(), extra_constants.begin(), extra_constants.end());
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

    int top = 0;
    for (const auto& [_, s] : stratum) top = std::max(top, s);

    Model model;
    for (int level = 0; level <= top; ++level) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& r : c.rules) {
                const std::string key = pred_key(r.head);
                if (stratum.at(key) != level) continue;
                Relation derived;
                RuleGrounder(r, model, universe).run(derived);
                Relation& rel = model[key];
                for (auto& t : derived)
                    if (rel.insert(t).second) changed = true;
            }
        }
    }

    std::set<Atom> out;
    for (const auto& [key, rel] : model) {
        const std::string pred = key.substr(0, key.find('/'));
        for (const auto& tup : rel) {
            Atom a{pred, {}};
            for (const auto& s : tup) a.args.push_back(Term::constant(s));
            out.insert(std::move(a));
        }
    }
    return out;
}

std::vector<Atom> ground_query_space(const Program& c, const std::vector<std::string>& extra_constants) {
    std::set<std::pair<std::string, std::size_t>> preds;
    for (const auto& r : c.rules) {
        preds.emplace(r.head.predicate, r.head.arity());
        for (const auto& l : r.body) preds.emplace(l.atom.predicate, l.atom.arity());
    }
    std::vector<std::string> universe = program_constants(c);
    universe.insert(universe.end(), extra_constants.begin(), extra_constants.end());
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

    std::vector<Atom> out;
    for (const auto& [pred, arity] : preds) {
        std::vector<std::size_t> idx(arity, 0);
        if (universe.empty()) continue;
        while (true) {
            Atom a{pred, {}};
            for (std::size_t i : idx) a.args.push_back(Term::constant(universe[i]));
            out.push_back(std::move(a));
            std::size_t k = 0;
            while (k < arity && ++idx[k] == universe.size()) idx[k++] = 0;
            if (k == arity) break;
        }
    }
    return out;
}

}  // namespace lpnet
