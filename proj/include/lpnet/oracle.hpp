#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpnet/logic.hpp"

namespace lpnet {

/// Triangular variable bindings. Lookups walk binding chains, so a variable
/// may be bound to another variable; no variable is ever bound to itself.
class Substitution {
public:
    const Term* lookup(const std::string& var) const;
    /// Follows variable-to-variable bindings until a constant or an unbound variable.
    Term resolve(const Term& t) const;
    void bind(const std::string& var, Term value);

    bool empty() const { return bindings_.empty(); }
    std::size_t size() const { return bindings_.size(); }
    const std::map<std::string, Term>& bindings() const { return bindings_; }

    /// Equality of the fully resolved mappings.
    bool operator==(const Substitution& other) const;

private:
    std::map<std::string, Term> bindings_;
};

struct SolverLimits {
    int max_depth = 64;
    bool path_loop_check = true;
};

class DepthExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FloundersError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotStratified : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Most general unifier of `a` and `b` extending `s`; nullopt on clash.
std::optional<Substitution> unify(const Atom& a, const Atom& b, Substitution s = {});

Term apply_subst(const Substitution& s, const Term& t);
Atom apply_subst(const Substitution& s, const Atom& a);
Literal apply_subst(const Substitution& s, const Literal& l);

/// SLD resolution with negation as failure over a fixed program. Rules are
/// indexed by predicate/arity once, so repeated queries are cheap.
class Solver {
public:
    explicit Solver(Program program, SolverLimits limits = {});

    /// Throws std::invalid_argument for a non-ground query.
    bool entails(const Atom& query) const;
    bool solve_literal(const Literal& lit) const;

    const Program& program() const { return program_; }

private:
    struct Path;
    class Search;

    Program program_;
    SolverLimits limits_;
    std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

int entails(const Program& c, const Atom& q, SolverLimits lim = {});
int solve_literal(const Program& c, const Literal& l, SolverLimits lim = {});

/// Least (stratified) model over the Herbrand universe of the program's
/// constants plus `extra_constants`. Throws NotStratified on a negative cycle.
std::set<Atom> fixpoint_model(const Program& c, const std::vector<std::string>& extra_constants = {});

std::vector<std::string> program_constants(const Program& c);

/// Every ground atom whose predicate/arity occurs in `c`, over the program's
/// constants plus `extra_constants`.
std::vector<Atom> ground_query_space(const Program& c, const std::vector<std::string>& extra_constants = {});

}  // namespace lpnet
