#include "hlsagent/kernel_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <regex>
#include <set>
#include <unordered_set>

#include "hlsagent/errors.hpp"

namespace hlsagent {

namespace {

// ---------------------------------------------------------------------------
// Lexing

enum class TokKind { Ident, Number, Punct, String, Directive };

struct Token {
    TokKind kind;
    std::string text;
    int line;
    std::size_t begin;  // offsets into the comment-free text
    std::size_t end;
};

struct Lexed {
    std::string clean;  // comments replaced by blanks, newlines kept
    std::vector<Token> tokens;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string strip_comments(std::string_view src) {
    std::string out(src);
    std::size_t i = 0;
    const std::size_t n = out.size();
    while (i < n) {
        char c = out[i];
        if (c == '"' || c == '\'') {
            char q = c;
            ++i;
            while (i < n && out[i] != q && out[i] != '\n') {
                if (out[i] == '\\' && i + 1 < n) ++i;
                ++i;
            }
            ++i;
        } else if (c == '/' && i + 1 < n && out[i + 1] == '/') {
            while (i < n && out[i] != '\n') out[i++] = ' ';
        } else if (c == '/' && i + 1 < n && out[i + 1] == '*') {
            out[i++] = ' ';
            out[i++] = ' ';
            while (i < n && !(out[i] == '*' && i + 1 < n && out[i + 1] == '/')) {
                if (out[i] != '\n') out[i] = ' ';
                ++i;
            }
            if (i < n) {
                out[i++] = ' ';
                out[i++] = ' ';
            }
        } else {
            ++i;
        }
    }
    return out;
}

const std::vector<std::string_view>& multi_char_puncts() {
    static const std::vector<std::string_view> p = {
        "<<=", ">>=", "...", "->", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
        "==",  "!=",  "<=",  ">=", "&&", "||", "<<", ">>", "::"};
    return p;
}

Lexed lex(std::string_view source) {
    Lexed lx;
    lx.clean = strip_comments(source);
    const std::string& s = lx.clean;
    const std::size_t n = s.size();
    std::size_t i = 0;
    int line = 1;
    bool at_line_start = true;

    while (i < n) {
        char c = s[i];
        if (c == '\n') {
            ++line;
            ++i;
            at_line_start = true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '#' && at_line_start) {
            std::size_t b = i;
            int start_line = line;
            while (i < n && s[i] != '\n') {
                if (s[i] == '\\' && i + 1 < n && s[i + 1] == '\n') {
                    i += 2;
                    ++line;
                    continue;
                }
                ++i;
            }
            lx.tokens.push_back({TokKind::Directive, s.substr(b, i - b), start_line, b, i});
            continue;
        }
        at_line_start = false;
        std::size_t b = i;
        if (ident_start(c)) {
            while (i < n && ident_char(s[i])) ++i;
            lx.tokens.push_back({TokKind::Ident, s.substr(b, i - b), line, b, i});
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            while (i < n && (ident_char(s[i]) || s[i] == '.' ||
                             ((s[i] == '+' || s[i] == '-') && (s[i - 1] == 'e' || s[i - 1] == 'E')))) {
                ++i;
            }
            lx.tokens.push_back({TokKind::Number, s.substr(b, i - b), line, b, i});
        } else if (c == '"' || c == '\'') {
            char q = c;
            ++i;
            while (i < n && s[i] != q && s[i] != '\n') {
                if (s[i] == '\\' && i + 1 < n) ++i;
                ++i;
            }
            if (i < n && s[i] == q) ++i;
            lx.tokens.push_back({TokKind::String, s.substr(b, i - b), line, b, i});
        } else {
            std::string_view rest(s.data() + i, n - i);
            std::size_t len = 1;
            for (auto p : multi_char_puncts()) {
                if (rest.starts_with(p)) {
                    len = p.size();
                    break;
                }
            }
            i += len;
            lx.tokens.push_back({TokKind::Punct, s.substr(b, len), line, b, i});
        }
    }
    return lx;
}

std::string collapse_ws(std::string_view text) {
    std::string out;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
        } else {
            if (space) out += ' ';
            out += c;
            space = false;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structural parse

struct Stmt;

struct Seq {
    std::vector<Stmt> items;
};

enum class StmtKind { Simple, Loop, If, Compound };

struct Stmt {
    StmtKind kind = StmtKind::Simple;
    int line = 0;
    std::string text;               // Simple: statement text; If: "if (cond)"
    std::vector<Token> tokens;      // Simple: statement tokens; If: condition tokens
    std::size_t loop_index = 0;     // Loop
    std::vector<Seq> bodies;        // Loop/Compound: one; If: then [+ else]
};

struct Function {
    std::string name;
    Seq body;
};

struct ParsedLoop {
    int line = 0;
    std::string header;
    std::optional<std::int64_t> trip;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
};

struct PendingPlaceholder {
    std::string slot_id;
    PragmaCategory category;
    int line;
};

struct ParsedKernel {
    std::vector<Function> functions;
    std::vector<ParsedLoop> loops;
    std::vector<PragmaSlot> slots;
};

std::string loop_id(std::size_t index) { return "L" + std::to_string(index + 1); }

std::optional<std::int64_t> parse_int_literal(std::string_view t) {
    std::string digits(t);
    while (!digits.empty() && (digits.back() == 'u' || digits.back() == 'U' || digits.back() == 'l' ||
                               digits.back() == 'L')) {
        digits.pop_back();
    }
    if (digits.empty()) return std::nullopt;
    int base = 10;
    std::size_t off = 0;
    if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
        base = 16;
        off = 2;
    }
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data() + off, digits.data() + digits.size(), v, base);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
    return v;
}

bool is_assign_op(std::string_view t) {
    return t == "=" || t == "+=" || t == "-=" || t == "*=" || t == "/=" || t == "%=" || t == "&=" ||
           t == "|=" || t == "^=" || t == "<<=" || t == ">>=";
}

// Constant integer expression over literals with + - * / % and parentheses,
// occupying the whole span [b, e). Anything else (identifiers, casts, macro
// names) yields nullopt.
class ConstExpr {
public:
    ConstExpr(const std::vector<Token>& toks, std::size_t b, std::size_t e) : toks_(toks), pos_(b), end_(e) {}

    std::optional<std::int64_t> run() {
        auto v = additive();
        if (!v || pos_ != end_) return std::nullopt;
        return v;
    }

private:
    bool at(std::string_view p) const {
        return pos_ < end_ && toks_[pos_].kind == TokKind::Punct && toks_[pos_].text == p;
    }

    std::optional<std::int64_t> additive() {
        auto lhs = multiplicative();
        while (lhs && (at("+") || at("-"))) {
            const bool plus = toks_[pos_++].text == "+";
            auto rhs = multiplicative();
            if (!rhs) return std::nullopt;
            lhs = plus ? *lhs + *rhs : *lhs - *rhs;
        }
        return lhs;
    }

    std::optional<std::int64_t> multiplicative() {
        auto lhs = unary();
        while (lhs && (at("*") || at("/") || at("%"))) {
            const std::string op = toks_[pos_++].text;
            auto rhs = unary();
            if (!rhs || (op != "*" && *rhs == 0)) return std::nullopt;
            lhs = op == "*" ? *lhs * *rhs : op == "/" ? *lhs / *rhs : *lhs % *rhs;
        }
        return lhs;
    }

    std::optional<std::int64_t> unary() {
        if (at("-")) {
            ++pos_;
            auto v = unary();
            return v ? std::optional<std::int64_t>(-*v) : std::nullopt;
        }
        if (at("+")) {
            ++pos_;
            return unary();
        }
        if (at("(")) {
            ++pos_;
            auto v = additive();
            if (!v || !at(")")) return std::nullopt;
            ++pos_;
            return v;
        }
        if (pos_ < end_ && toks_[pos_].kind == TokKind::Number) return parse_int_literal(toks_[pos_++].text);
        return std::nullopt;
    }

    const std::vector<Token>& toks_;
    std::size_t pos_;
    std::size_t end_;
};

std::optional<std::int64_t> literal_value(const std::vector<Token>& toks, std::size_t b, std::size_t e) {
    if (b >= e) return std::nullopt;
    return ConstExpr(toks, b, e).run();
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

/// Trip count of `for (init; cond; step)` when all three parts are literal.
std::optional<std::int64_t> literal_trip_count(const std::vector<Token>& init,
                                               const std::vector<Token>& cond,
                                               const std::vector<Token>& step) {
    // init: [type...] var = literal
    auto eq = std::find_if(init.begin(), init.end(), [](const Token& t) { return t.text == "="; });
    if (eq == init.end() || eq == init.begin() || (eq - 1)->kind != TokKind::Ident) return std::nullopt;
    const std::string var = (eq - 1)->text;
    auto start = literal_value(init, static_cast<std::size_t>(eq - init.begin()) + 1, init.size());
    if (!start) return std::nullopt;

    // cond: var OP literal | literal OP var
    if (cond.size() < 3) return std::nullopt;
    std::string op;
    std::optional<std::int64_t> bound;
    if (cond[0].kind == TokKind::Ident && cond[0].text == var) {
        op = cond[1].text;
        bound = literal_value(cond, 2, cond.size());
    } else if (cond.back().kind == TokKind::Ident && cond.back().text == var) {
        op = cond[cond.size() - 2].text;
        bound = literal_value(cond, 0, cond.size() - 2);
        if (op == "<") op = ">";
        else if (op == ">") op = "<";
        else if (op == "<=") op = ">=";
        else if (op == ">=") op = "<=";
    }
    if (!bound) return std::nullopt;

    // step: var++ | ++var | var-- | --var | var += c | var -= c | var = var +/- c
    std::optional<std::int64_t> inc;
    auto is_var = [&](const Token& t) { return t.kind == TokKind::Ident && t.text == var; };
    if (step.size() == 2 && is_var(step[0]) && (step[1].text == "++" || step[1].text == "--")) {
        inc = step[1].text == "++" ? 1 : -1;
    } else if (step.size() == 2 && is_var(step[1]) && (step[0].text == "++" || step[0].text == "--")) {
        inc = step[0].text == "++" ? 1 : -1;
    } else if (step.size() >= 3 && is_var(step[0]) && (step[1].text == "+=" || step[1].text == "-=")) {
        auto c = literal_value(step, 2, step.size());
        if (c) inc = step[1].text == "+=" ? *c : -*c;
    } else if (step.size() == 5 && is_var(step[0]) && step[1].text == "=") {
        if (is_var(step[2]) && (step[3].text == "+" || step[3].text == "-")) {
            auto c = literal_value(step, 4, 5);
            if (c) inc = step[3].text == "+" ? *c : -*c;
        } else if (is_var(step[4]) && step[3].text == "+") {
            inc = literal_value(step, 2, 3);
        }
    }
    if (!inc || *inc == 0) return std::nullopt;

    const std::int64_t a = *start, b = *bound, s = *inc;
    std::int64_t trips = 0;
    if (op == "<" && s > 0) {
        trips = b > a ? ceil_div(b - a, s) : 0;
    } else if (op == "<=" && s > 0) {
        trips = b >= a ? ceil_div(b - a + 1, s) : 0;
    } else if (op == ">" && s < 0) {
        trips = a > b ? ceil_div(a - b, -s) : 0;
    } else if (op == ">=" && s < 0) {
        trips = a >= b ? ceil_div(a - b + 1, -s) : 0;
    } else if (op == "!=") {
        if ((b - a) % s != 0 || (b - a) / s < 0) return std::nullopt;
        trips = (b - a) / s;
    } else {
        return std::nullopt;
    }
    return trips;
}

class Parser {
public:
    explicit Parser(const Lexed& lx) : lx_(lx), toks_(lx.tokens) {}

    ParsedKernel run() {
        parse_top_level(/*until_brace=*/false);
        flush_pending_as_error();
        return std::move(out_);
    }

private:
    const Lexed& lx_;
    const std::vector<Token>& toks_;
    std::size_t pos_ = 0;
    ParsedKernel out_;
    std::vector<PendingPlaceholder> pending_;
    std::vector<std::size_t> loop_stack_;

    bool at_end() const { return pos_ >= toks_.size(); }
    const Token& peek(std::size_t ahead = 0) const { return toks_[pos_ + ahead]; }
    bool peek_is(std::string_view text, std::size_t ahead = 0) const {
        return pos_ + ahead < toks_.size() && toks_[pos_ + ahead].kind != TokKind::String &&
               toks_[pos_ + ahead].text == text;
    }
    int current_line() const { return at_end() ? (toks_.empty() ? 1 : toks_.back().line) : peek().line; }

    std::string text_of(std::size_t first, std::size_t last_exclusive) const {
        if (first >= last_exclusive) return {};
        return collapse_ws(std::string_view(lx_.clean).substr(
            toks_[first].begin, toks_[last_exclusive - 1].end - toks_[first].begin));
    }

    void flush_pending_as_error() {
        if (!pending_.empty()) throw UnattachedPragma(pending_.front().line);
    }

    void note_directive(const Token& t) {
        static const std::regex placeholder(R"(auto\s*\{\s*([^}\s]*)\s*\})");
        for (auto it = std::sregex_iterator(t.text.begin(), t.text.end(), placeholder);
             it != std::sregex_iterator(); ++it) {
            std::string name = (*it)[1].str();
            auto cat = category_from_slot_id(name);
            if (!cat) throw UnknownCategory(name);
            pending_.push_back({name, *cat, t.line});
        }
    }

    // Top level: function definitions, declarations, namespaces, extern "C".
    void parse_top_level(bool until_brace) {
        while (!at_end()) {
            if (peek().kind == TokKind::Directive) {
                note_directive(peek());
                ++pos_;
                flush_pending_as_error();
                continue;
            }
            if (peek_is("}")) {
                if (until_brace) return;
                throw ParseError(peek().line, "unbalanced '}'");
            }
            std::size_t start = pos_;
            int paren = 0;
            while (!at_end()) {
                const Token& t = peek();
                if (t.kind == TokKind::Directive) break;
                if (t.text == "(") ++paren;
                if (t.text == ")") --paren;
                if (paren == 0 && (t.text == ";" || t.text == "{" || t.text == "}")) break;
                ++pos_;
            }
            if (at_end()) {
                if (paren != 0) throw ParseError(toks_[start].line, "unbalanced parentheses");
                return;
            }
            if (peek().kind == TokKind::Directive || peek_is("}")) continue;
            if (peek_is(";")) {
                ++pos_;
                continue;
            }
            // '{'
            const int brace_line = peek().line;
            if (pos_ > start && toks_[pos_ - 1].text == ")") {
                parse_function(start, brace_line);
            } else if (toks_[start].text == "extern" || toks_[start].text == "namespace") {
                ++pos_;
                parse_top_level(/*until_brace=*/true);
                if (at_end()) throw ParseError(brace_line, "unbalanced '{'");
                ++pos_;
            } else {
                skip_balanced_braces();
            }
        }
    }

    void skip_balanced_braces() {
        const int line = peek().line;
        int depth = 0;
        while (!at_end()) {
            if (peek_is("{")) ++depth;
            if (peek_is("}")) {
                if (--depth == 0) {
                    ++pos_;
                    return;
                }
            }
            ++pos_;
        }
        throw ParseError(line, "unbalanced '{'");
    }

    void parse_function(std::size_t decl_start, int brace_line) {
        // name = identifier before the '(' matching the final ')'
        std::size_t close = pos_ - 1;
        int depth = 0;
        std::size_t open = close;
        for (std::size_t i = close + 1; i-- > decl_start;) {
            if (toks_[i].text == ")") ++depth;
            if (toks_[i].text == "(" && --depth == 0) {
                open = i;
                break;
            }
        }
        Function fn;
        fn.name = (open > decl_start && toks_[open - 1].kind == TokKind::Ident) ? toks_[open - 1].text
                                                                                : "fn";
        ++pos_;  // '{'
        fn.body = parse_seq_until_brace(brace_line);
        out_.functions.push_back(std::move(fn));
    }

    Seq parse_seq_until_brace(int open_line) {
        Seq seq;
        while (true) {
            if (at_end()) throw ParseError(open_line, "unbalanced '{'");
            if (peek().kind == TokKind::Directive) {
                note_directive(peek());
                ++pos_;
                continue;
            }
            if (peek_is("}")) {
                flush_pending_as_error();
                ++pos_;
                return seq;
            }
            if (auto s = parse_statement()) seq.items.push_back(std::move(*s));
        }
    }

    // Parenthesized group starting at '('; returns the inner token range.
    std::pair<std::size_t, std::size_t> parse_parens(std::string_view what) {
        if (!peek_is("(")) throw ParseError(current_line(), "malformed " + std::string(what) + " header");
        const int line = peek().line;
        std::size_t inner = ++pos_;
        int depth = 1;
        while (!at_end()) {
            if (peek_is("(")) ++depth;
            if (peek_is(")") && --depth == 0) {
                std::size_t end = pos_++;
                return {inner, end};
            }
            if (peek().kind == TokKind::Directive || peek_is("{") || peek_is("}")) break;
            ++pos_;
        }
        throw ParseError(line, "malformed " + std::string(what) + " header (unbalanced parentheses)");
    }

    Seq parse_body() {
        Seq body;
        // Directives between a header and its body still belong to the body.
        while (!at_end() && peek().kind == TokKind::Directive) {
            note_directive(peek());
            ++pos_;
        }
        if (at_end()) throw ParseError(current_line(), "missing loop or branch body");
        if (auto s = parse_statement()) {
            if (s->kind == StmtKind::Compound) return std::move(s->bodies.front());
            body.items.push_back(std::move(*s));
        }
        return body;
    }

    std::size_t begin_loop(int line, std::string header, std::optional<std::int64_t> trip) {
        std::size_t idx = out_.loops.size();
        ParsedLoop loop;
        loop.line = line;
        loop.header = std::move(header);
        loop.trip = trip;
        if (!loop_stack_.empty()) {
            loop.parent = loop_stack_.back();
            out_.loops[loop_stack_.back()].children.push_back(idx);
        }
        out_.loops.push_back(std::move(loop));
        for (const auto& p : pending_) {
            out_.slots.push_back({p.slot_id, p.category, loop_id(idx), p.line});
        }
        pending_.clear();
        loop_stack_.push_back(idx);
        return idx;
    }

    std::optional<Stmt> parse_statement() {
        const Token& t = peek();
        const std::string& w = t.text;
        const bool ident = t.kind == TokKind::Ident;

        if (ident && (w == "for" || w == "while")) return parse_loop();
        if (ident && w == "do") return parse_do_while();
        // Statement label (`outer: for (...)`): skip it, pragmas stay pending.
        if (ident && w != "default" && w != "case" && peek_is(":", 1)) {
            pos_ += 2;
            if (at_end()) throw ParseError(t.line, "label without a statement");
            if (peek_is("}")) return std::nullopt;
            return parse_statement();
        }
        flush_pending_as_error();

        if (w == ";" && t.kind == TokKind::Punct) {
            ++pos_;
            return std::nullopt;
        }
        if (w == "{" && t.kind == TokKind::Punct) {
            ++pos_;
            Stmt s;
            s.kind = StmtKind::Compound;
            s.line = t.line;
            s.bodies.push_back(parse_seq_until_brace(t.line));
            return s;
        }
        if (ident && (w == "if" || w == "switch")) return parse_branch();
        if (ident && w == "else") throw ParseError(t.line, "'else' without 'if'");
        if (ident && (w == "case" || (w == "default" && peek_is(":", 1)))) {
            while (!at_end() && !peek_is(":")) ++pos_;
            if (!at_end()) ++pos_;
            return std::nullopt;
        }
        return parse_simple();
    }

    Stmt parse_simple() {
        Stmt s;
        s.kind = StmtKind::Simple;
        s.line = peek().line;
        std::size_t start = pos_;
        int depth = 0;
        while (!at_end()) {
            const Token& t = peek();
            if (t.kind == TokKind::Directive) break;
            if (t.kind == TokKind::Punct) {
                if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
                if (t.text == ")" || t.text == "]" || t.text == "}") {
                    if (depth == 0) break;  // tolerate a missing ';' before '}'
                    --depth;
                }
                if (t.text == ";" && depth == 0) {
                    ++pos_;
                    break;
                }
            }
            ++pos_;
        }
        if (pos_ == start) throw ParseError(s.line, "unexpected token '" + peek().text + "'");
        s.tokens.assign(toks_.begin() + static_cast<std::ptrdiff_t>(start),
                        toks_.begin() + static_cast<std::ptrdiff_t>(pos_));
        s.text = text_of(start, pos_);
        return s;
    }

    Stmt parse_loop() {
        const Token& kw = peek();
        const int line = kw.line;
        const bool is_for = kw.text == "for";
        std::size_t header_begin = pos_;
        ++pos_;
        auto [b, e] = parse_parens(kw.text);
        std::optional<std::int64_t> trip;
        if (is_for) {
            std::vector<std::vector<Token>> parts(1);
            int depth = 0;
            for (std::size_t i = b; i < e; ++i) {
                const Token& t = toks_[i];
                if (t.text == "(" || t.text == "[") ++depth;
                if (t.text == ")" || t.text == "]") --depth;
                if (t.text == ";" && depth == 0) {
                    parts.emplace_back();
                    continue;
                }
                parts.back().push_back(t);
            }
            if (parts.size() != 3) throw ParseError(line, "malformed for header (expected two ';')");
            trip = literal_trip_count(parts[0], parts[1], parts[2]);
        }
        Stmt s;
        s.kind = StmtKind::Loop;
        s.line = line;
        s.loop_index = begin_loop(line, text_of(header_begin, pos_), trip);
        s.bodies.push_back(parse_body());
        loop_stack_.pop_back();
        return s;
    }

    Stmt parse_do_while() {
        const int line = peek().line;
        ++pos_;
        Stmt s;
        s.kind = StmtKind::Loop;
        s.line = line;
        s.loop_index = begin_loop(line, "do", std::nullopt);
        s.bodies.push_back(parse_body());
        loop_stack_.pop_back();
        if (!peek_is("while")) throw ParseError(line, "malformed do-while (missing 'while')");
        std::size_t wb = pos_;
        ++pos_;
        parse_parens("do-while");
        out_.loops[s.loop_index].header = "do ... " + text_of(wb, pos_);
        if (peek_is(";")) ++pos_;
        return s;
    }

    Stmt parse_branch() {
        const int line = peek().line;
        std::size_t kw = pos_;
        ++pos_;
        auto [b, e] = parse_parens(toks_[kw].text);
        Stmt s;
        s.kind = StmtKind::If;
        s.line = line;
        s.text = text_of(kw, pos_);
        s.tokens.assign(toks_.begin() + static_cast<std::ptrdiff_t>(b),
                        toks_.begin() + static_cast<std::ptrdiff_t>(e));
        s.bodies.push_back(parse_body());
        if (toks_[kw].text == "if" && peek_is("else")) {
            ++pos_;
            s.bodies.push_back(parse_body());
        }
        return s;
    }
};

ParsedKernel parse_kernel(std::string_view source) {
    Lexed lx = lex(source);
    return Parser(lx).run();
}

// ---------------------------------------------------------------------------
// Name-level def/use

const std::unordered_set<std::string>& non_variable_words() {
    static const std::unordered_set<std::string> words = {
        "auto",     "break",    "case",     "char",     "const",    "continue", "default",
        "do",       "double",   "else",     "enum",     "extern",   "float",    "for",
        "goto",     "if",       "inline",   "int",      "long",     "register", "restrict",
        "return",   "short",    "signed",   "sizeof",   "static",   "struct",   "switch",
        "typedef",  "union",    "unsigned", "void",     "volatile", "while",    "bool",
        "true",     "false",    "size_t",   "int8_t",   "int16_t",  "int32_t",  "int64_t",
        "uint8_t",  "uint16_t", "uint32_t", "uint64_t", "NULL",     "nullptr",  "constexpr"};
    return words;
}

struct DefUse {
    std::set<std::string> writes;
    std::set<std::string> reads;
};

DefUse def_use(const std::vector<Token>& toks) {
    DefUse du;
    const auto& skip = non_variable_words();
    std::vector<bool> consumed(toks.size(), false);  // positions that are not reads

    auto is_var_token = [&](std::size_t i) {
        const Token& t = toks[i];
        if (t.kind != TokKind::Ident || skip.count(t.text)) return false;
        if (i > 0 && (toks[i - 1].text == "." || toks[i - 1].text == "->")) return false;  // member
        if (i + 1 < toks.size() && toks[i + 1].text == "(") return false;                  // call
        return true;
    };

    for (std::size_t i = 0; i < toks.size(); ++i) {
        const std::string& op = toks[i].text;
        if (toks[i].kind != TokKind::Punct) continue;
        if (is_assign_op(op)) {
            // LHS operand: back to the previous ',', '(', ';', '{' or assignment at depth 0.
            int depth = 0;
            std::size_t b = i;
            while (b > 0) {
                const Token& t = toks[b - 1];
                if (t.text == ")" || t.text == "]") ++depth;
                if (t.text == "(" || t.text == "[") {
                    if (depth == 0) break;
                    --depth;
                }
                if (depth == 0 && (t.text == "," || t.text == ";" || t.text == "{" || is_assign_op(t.text))) break;
                --b;
            }
            // Base name = last depth-0 variable identifier of the operand; earlier
            // depth-0 identifiers are type names.
            std::optional<std::size_t> base;
            std::vector<std::size_t> depth0;
            depth = 0;
            for (std::size_t j = b; j < i; ++j) {
                const Token& t = toks[j];
                if (t.text == "(" || t.text == "[") ++depth;
                if (t.text == ")" || t.text == "]") --depth;
                if (depth == 0 && t.kind == TokKind::Ident && (j == b || (toks[j - 1].text != "." && toks[j - 1].text != "->"))) {
                    depth0.push_back(j);
                }
            }
            for (auto j : depth0) {
                if (is_var_token(j)) base = j;
            }
            for (auto j : depth0) consumed[j] = true;
            if (base) {
                du.writes.insert(toks[*base].text);
                if (op != "=") du.reads.insert(toks[*base].text);
            }
        } else if (op == "++" || op == "--") {
            std::optional<std::size_t> target;
            if (i + 1 < toks.size() && is_var_token(i + 1)) target = i + 1;
            else if (i > 0 && is_var_token(i - 1)) target = i - 1;
            if (target) {
                du.writes.insert(toks[*target].text);
                du.reads.insert(toks[*target].text);
            }
        }
    }

    // Declarations: type names and declarators without an initializer
    // (`int a[4], b;`) are not uses.
    const bool declaration = toks.size() >= 2 && toks[0].kind == TokKind::Ident &&
                             toks[0].text != "return" && toks[0].text != "sizeof" &&
                             (skip.count(toks[0].text) > 0 || toks[1].kind == TokKind::Ident);
    if (declaration) {
        int depth = 0;
        for (std::size_t j = 0; j < toks.size(); ++j) {
            const Token& t = toks[j];
            if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
            if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
            if (depth != 0 || t.kind != TokKind::Ident) continue;
            const Token* prev = j > 0 ? &toks[j - 1] : nullptr;
            const Token* next = j + 1 < toks.size() ? &toks[j + 1] : nullptr;
            if (next && next->kind == TokKind::Ident) {
                consumed[j] = true;  // type name
                continue;
            }
            const bool after_type = prev && (prev->kind == TokKind::Ident || prev->text == "*" || prev->text == ",");
            const bool no_init = !next || next->text == "," || next->text == ";" || next->text == "[";
            if (after_type && no_init) consumed[j] = true;
        }
    }

    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!consumed[i] && is_var_token(i)) du.reads.insert(toks[i].text);
    }
    return du;
}

// ---------------------------------------------------------------------------
// CDFG lowering

class Lowerer {
public:
    explicit Lowerer(const ParsedKernel& pk) : pk_(pk) {}

    Cdfg run() {
        g_.nodes.push_back({std::string(Cdfg::kEntry), CdfgNodeKind::Block, "entry"});
        for (const auto& fn : pk_.functions) {
            lower_seq(fn.body, {std::string(Cdfg::kEntry)}, fn.name + " entry");
        }
        add_data_edges();
        return std::move(g_);
    }

private:
    const ParsedKernel& pk_;
    Cdfg g_;
    std::set<std::pair<std::string, std::string>> control_seen_;
    std::vector<std::pair<std::string, DefUse>> stmt_defuse_;
    int blocks_ = 0;
    int stmts_ = 0;

    void control(const std::string& a, const std::string& b) {
        if (control_seen_.insert({a, b}).second) g_.edges.push_back({a, b, CdfgEdgeKind::Control});
    }

    std::string add_block(const std::string& label) {
        std::string id = "B" + std::to_string(++blocks_);
        g_.nodes.push_back({id, CdfgNodeKind::Block, label});
        return id;
    }

    std::string add_stmt(const std::string& label, const std::vector<Token>& toks) {
        std::string id = "S" + std::to_string(++stmts_);
        g_.nodes.push_back({id, CdfgNodeKind::Statement, label});
        stmt_defuse_.emplace_back(id, def_use(toks));
        return id;
    }

    using Preds = std::vector<std::string>;

    void link(const Preds& preds, const std::string& to) {
        for (const auto& p : preds) control(p, to);
    }

    // Returns the nodes whose control flows out of the sequence.
    Preds lower_seq(const Seq& seq, Preds preds, std::string block_label) {
        bool in_block = false;
        lower_items(seq, preds, block_label, in_block);
        return preds;
    }

    void lower_items(const Seq& seq, Preds& preds, std::string& block_label, bool& in_block) {
        for (const auto& s : seq.items) {
            switch (s.kind) {
                case StmtKind::Compound:
                    lower_items(s.bodies.front(), preds, block_label, in_block);
                    break;
                case StmtKind::Simple:
                case StmtKind::If: {
                    if (!in_block) {
                        std::string b = add_block(block_label);
                        link(preds, b);
                        preds = {b};
                        in_block = true;
                    }
                    std::string id = add_stmt(s.text, s.tokens);
                    link(preds, id);
                    preds = {id};
                    if (s.kind == StmtKind::If) {
                        Preds exits = lower_seq(s.bodies[0], {id}, "then of " + id);
                        if (s.bodies.size() > 1) {
                            Preds else_exits = lower_seq(s.bodies[1], {id}, "else of " + id);
                            exits.insert(exits.end(), else_exits.begin(), else_exits.end());
                        } else {
                            exits.push_back(id);
                        }
                        std::sort(exits.begin(), exits.end());
                        exits.erase(std::unique(exits.begin(), exits.end()), exits.end());
                        preds = exits;
                        in_block = false;
                        block_label = "after " + id;
                    }
                    break;
                }
                case StmtKind::Loop: {
                    std::string id = loop_id(s.loop_index);
                    g_.nodes.push_back({id, CdfgNodeKind::Loop, id + ": " + pk_.loops[s.loop_index].header});
                    link(preds, id);
                    Preds body_exits = lower_seq(s.bodies.front(), {id}, id + " body");
                    link(body_exits, id);  // back-edge
                    preds = {id};
                    in_block = false;
                    block_label = "after " + id;
                    break;
                }
            }
        }
    }

    void add_data_edges() {
        for (const auto& [w_id, w] : stmt_defuse_) {
            for (const auto& [r_id, r] : stmt_defuse_) {
                if (w_id == r_id) continue;
                bool shared = std::any_of(w.writes.begin(), w.writes.end(),
                                          [&](const std::string& n) { return r.reads.count(n) > 0; });
                if (shared) g_.edges.push_back({w_id, r_id, CdfgEdgeKind::Data});
            }
        }
    }
};

LoopTree to_loop_tree(const ParsedKernel& pk) {
    LoopTree tree;
    for (std::size_t i = 0; i < pk.loops.size(); ++i) {
        const auto& l = pk.loops[i];
        LoopNode n;
        n.loop_id = loop_id(i);
        n.header_line = l.line;
        n.static_trip_count = l.trip;
        n.header = l.header;
        if (l.parent) {
            n.parent = loop_id(*l.parent);
        } else {
            tree.roots.push_back(n.loop_id);
        }
        for (auto c : l.children) n.children.push_back(loop_id(c));
        tree.nodes.push_back(std::move(n));
    }
    return tree;
}

}  // namespace

std::string_view to_string(CdfgNodeKind k) {
    switch (k) {
        case CdfgNodeKind::Block: return "block";
        case CdfgNodeKind::Loop: return "loop";
        case CdfgNodeKind::Statement: return "statement";
    }
    return "?";
}

std::string_view to_string(CdfgEdgeKind k) {
    return k == CdfgEdgeKind::Control ? "control" : "data";
}

const LoopNode* LoopTree::find(std::string_view id) const {
    for (const auto& n : nodes) {
        if (n.loop_id == id) return &n;
    }
    return nullptr;
}

std::size_t LoopTree::depth(std::string_view id) const {
    std::size_t d = 0;
    for (const LoopNode* n = find(id); n && !n->parent.empty(); n = find(n->parent)) ++d;
    return d;
}

const CdfgNode* Cdfg::find(std::string_view id) const {
    for (const auto& n : nodes) {
        if (n.node_id == id) return &n;
    }
    return nullptr;
}

std::size_t Cdfg::count(CdfgNodeKind k) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [k](const CdfgNode& n) { return n.kind == k; }));
}

std::size_t Cdfg::count(CdfgEdgeKind k) const {
    return static_cast<std::size_t>(
        std::count_if(edges.begin(), edges.end(), [k](const CdfgEdge& e) { return e.kind == k; }));
}

std::vector<PragmaSlot> extract_pragma_slots(std::string_view source) {
    return parse_kernel(source).slots;
}

LoopTree build_loop_tree(std::string_view source) { return to_loop_tree(parse_kernel(source)); }

Cdfg build_cdfg(const LoopTree& tree, std::string_view source) {
    ParsedKernel pk = parse_kernel(source);
    if (pk.loops.size() != tree.nodes.size()) {
        throw std::invalid_argument("loop tree was not built from this source");
    }
    return Lowerer(pk).run();
}

std::optional<std::int64_t> derived_trip_count(std::optional<std::int64_t> trip, std::int64_t unroll,
                                               std::int64_t tile) {
    if (!trip) return std::nullopt;
    const std::int64_t div = std::max<std::int64_t>(1, unroll) * std::max<std::int64_t>(1, tile);
    return (*trip + div - 1) / div;
}

AnnotatedDesignGraph apply_pragmas(const Cdfg& cdfg, const LoopTree& tree,
                                   const std::vector<PragmaSlot>& slots, const DesignPoint& point) {
    AnnotatedDesignGraph g;
    g.base = cdfg;
    for (const auto& n : tree.nodes) g.annotations[n.loop_id] = LoopAnnotation{};

    for (const auto& [slot_id, a] : point.pragmas) {
        auto it = std::find_if(slots.begin(), slots.end(),
                               [&](const PragmaSlot& s) { return s.slot_id == slot_id; });
        if (it == slots.end()) throw UnresolvedSlot(slot_id);
        auto ann = g.annotations.find(it->attached_loop);
        if (ann == g.annotations.end()) throw UnresolvedSlot(slot_id);
        switch (it->category) {
            case PragmaCategory::Parallel: ann->second.unroll_factor = a.factor(); break;
            case PragmaCategory::Tile: ann->second.tile_factor = a.factor(); break;
            case PragmaCategory::Pipe: ann->second.pipeline_mode = a.mode(); break;
        }
    }
    for (auto& [loop, ann] : g.annotations) {
        ann.derived_trip_count =
            derived_trip_count(tree.find(loop)->static_trip_count, ann.unroll_factor, ann.tile_factor);
    }
    return g;
}

KernelModel KernelModel::analyze(std::string kernel_id, std::string source) {
    ParsedKernel pk = parse_kernel(source);
    KernelModel m;
    m.kernel_id = std::move(kernel_id);
    m.slots = pk.slots;
    m.tree = to_loop_tree(pk);
    m.cdfg = Lowerer(pk).run();
    m.source = std::move(source);
    return m;
}

const PragmaSlot* KernelModel::slot(std::string_view slot_id) const {
    for (const auto& s : slots) {
        if (s.slot_id == slot_id) return &s;
    }
    return nullptr;
}

}  // namespace hlsagent
