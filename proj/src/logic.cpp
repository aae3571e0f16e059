#include "lpnet/logic.hpp"

#include <algorithm>

namespace lpnet {

namespace {

bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_alpha(char c) { return is_lower(c) || is_upper(c); }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Single-line cursor; `line` is only carried for error reporting.
class Cursor {
public:
    Cursor(std::string_view text, std::size_t line) : text_(text), line_(line) {}

    void skip_blanks() {
        while (pos_ < text_.size() && is_blank(text_[pos_])) ++pos_;
    }
    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }
    bool try_consume(char c) {
        skip_blanks();
        if (peek() != c) return false;
        ++pos_;
        return true;
    }
    bool try_consume(std::string_view s) {
        skip_blanks();
        if (text_.substr(pos_, s.size()) != s) return false;
        pos_ += s.size();
        return true;
    }
    void expect(char c, const char* what) {
        if (!try_consume(c)) fail(std::string("expected ") + what);
    }
    std::string_view word() {
        skip_blanks();
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_alpha(text_[pos_])) ++pos_;
        return text_.substr(start, pos_ - start);
    }
    [[noreturn]] void fail(const std::string& msg) const { fail_at(msg, pos_); }
    [[noreturn]] void fail_at(const std::string& msg, std::size_t pos) const {
        throw SyntaxError(msg, line_, pos + 1);
    }
    std::size_t pos() const { return pos_; }

private:
    std::string_view text_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

Term parse_term(Cursor& cur) {
    cur.skip_blanks();
    const std::size_t start = cur.pos();
    const std::string_view w = cur.word();
    if (w.empty()) cur.fail("expected a constant or variable");
    if (is_constant_name(w)) return Term::constant(std::string(w));
    if (is_variable_name(w)) return Term::variable(std::string(w));
    cur.fail_at("mixed-case symbol '" + std::string(w) + "'", start);
}

Atom parse_atom_at(Cursor& cur) {
    cur.skip_blanks();
    const std::size_t start = cur.pos();
    const std::string_view pred = cur.word();
    if (pred.empty()) cur.fail("expected a predicate");
    if (!is_constant_name(pred)) cur.fail_at("predicate must be lowercase: '" + std::string(pred) + "'", start);
    Atom atom{std::string(pred), {}};
    const std::size_t open = cur.pos();
    if (!cur.try_consume('(')) cur.fail("expected '(' after predicate (arity 0 is not supported)");
    do {
        atom.args.push_back(parse_term(cur));
    } while (cur.try_consume(','));
    if (!cur.try_consume(')')) {
        if (cur.at_end() || cur.peek() == '.') cur.fail_at("unbalanced parentheses", open);
        cur.fail("expected ',' or ')'");
    }
    return atom;
}

Literal parse_literal(Cursor& cur) {
    Literal lit;
    lit.negated = cur.try_consume('-');
    cur.skip_blanks();
    if (cur.at_end() || cur.peek() == '.' || cur.peek() == ',') cur.fail("empty body literal");
    lit.atom = parse_atom_at(cur);
    return lit;
}

Rule parse_rule_line(std::string_view text, std::size_t line) {
    Cursor cur(text, line);
    cur.skip_blanks();
    if (cur.peek() == '-') cur.fail("rule head cannot be negated");
    Rule rule;
    rule.head = parse_atom_at(cur);
    if (cur.try_consume(":-")) {
        do {
            rule.body.push_back(parse_literal(cur));
        } while (cur.try_consume(','));
    }
    if (!cur.try_consume('.')) cur.fail("unterminated rule, expected '.'");
    cur.skip_blanks();
    if (!cur.at_end()) cur.fail("unexpected text after '.'");
    return rule;
}

}  // namespace

SyntaxError::SyntaxError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

bool Atom::is_ground() const {
    return std::none_of(args.begin(), args.end(), [](const Term& t) { return t.is_variable(); });
}

bool is_constant_name(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), is_lower);
}

bool is_variable_name(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), is_upper);
}

Program parse_program(std::string_view text) {
    Program prog;
    std::size_t line = 1;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        const std::string_view row = text.substr(0, nl);
        if (!std::all_of(row.begin(), row.end(), is_blank)) prog.rules.push_back(parse_rule_line(row, line));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
        ++line;
    }
    return prog;
}

Rule parse_rule(std::string_view text) {
    if (text.find('\n') != std::string_view::npos) throw SyntaxError("a rule must fit on one line", 1, 1);
    return parse_rule_line(text, 1);
}

Atom parse_atom(std::string_view text) {
    Cursor cur(text, 1);
    Atom a = parse_atom_at(cur);
    cur.try_consume('.');
    cur.skip_blanks();
    if (!cur.at_end()) cur.fail("unexpected text after atom");
    return a;
}

QueryLine parse_query_line(std::string_view text) {
    Cursor cur(text, 1);
    if (!cur.try_consume('?')) cur.fail("query line must start with '?'");
    cur.skip_blanks();
    const std::size_t atom_start = cur.pos();
    QueryLine q;
    q.query = parse_atom_at(cur);
    if (!q.query.is_ground()) cur.fail_at("query must be ground", atom_start);
    if (!cur.try_consume('.')) cur.fail("expected '.' after query atom");
    cur.skip_blanks();
    const std::size_t target_pos = cur.pos();
    const std::string_view tail = text.substr(target_pos);
    const auto end = tail.find_last_not_of(" \t\r");
    if (end != 0 || (tail[0] != '0' && tail[0] != '1')) cur.fail_at("target must be 0 or 1", target_pos);
    q.target = tail[0] - '0';
    return q;
}

std::string render(const Term& t) { return t.name; }

std::string render(const Atom& a) {
    std::string out = a.predicate;
    out += '(';
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (i) out += ',';
        out += a.args[i].name;
    }
    out += ')';
    return out;
}

std::string render(const Literal& l) { return l.negated ? "-" + render(l.atom) : render(l.atom); }

std::string render(const Rule& r) {
    std::string out = render(r.head);
    for (std::size_t i = 0; i < r.body.size(); ++i) {
        out += i ? " , " : " :- ";
        out += render(r.body[i]);
    }
    out += '.';
    return out;
}

std::string render(const Program& p) {
    std::string out;
    for (std::size_t i = 0; i < p.rules.size(); ++i) {
        if (i) out += '\n';
        out += render(p.rules[i]);
    }
    return out;
}

std::string render(const QueryLine& q) { return "? " + render(q.query) + ". " + std::to_string(q.target); }

}  // namespace lpnet
