#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lpnet {

enum class TermKind { constant, variable };

struct Term {
    TermKind kind = TermKind::constant;
    std::string name;

    static Term constant(std::string n) { return {TermKind::constant, std::move(n)}; }
    static Term variable(std::string n) { return {TermKind::variable, std::move(n)}; }

    bool is_variable() const { return kind == TermKind::variable; }
    bool operator==(const Term&) const = default;
    auto operator<=>(const Term&) const = default;
};

struct Atom {
    std::string predicate;
    std::vector<Term> args;

    std::size_t arity() const { return args.size(); }
    bool is_ground() const;
    bool operator==(const Atom&) const = default;
    auto operator<=>(const Atom&) const = default;
};

struct Literal {
    Atom atom;
    bool negated = false;

    bool operator==(const Literal&) const = default;
};

struct Rule {
    Atom head;
    std::vector<Literal> body;

    bool is_fact() const { return body.empty(); }
    bool operator==(const Rule&) const = default;
};

struct Program {
    std::vector<Rule> rules;

    bool operator==(const Program&) const = default;
};

struct QueryLine {
    Atom query;
    int target = 0;

    bool operator==(const QueryLine&) const = default;
};

/// Raised for malformed program or query text. Line and column are 1-based.
class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string& what, std::size_t line, std::size_t column);

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

bool is_constant_name(std::string_view s);
bool is_variable_name(std::string_view s);

/// Parses newline-separated rules, each terminated by '.'. Blank lines are skipped.
Program parse_program(std::string_view text);
Rule parse_rule(std::string_view text);
Atom parse_atom(std::string_view text);
/// Parses "? <ground atom>. <0|1>".
QueryLine parse_query_line(std::string_view text);

std::string render(const Term& t);
std::string render(const Atom& a);
std::string render(const Literal& l);
std::string render(const Rule& r);
/// One rule per line joined by "\n" (no trailing newline); the empty program renders as "".
std::string render(const Program& p);
std::string render(const QueryLine& q);

}  // namespace lpnet
