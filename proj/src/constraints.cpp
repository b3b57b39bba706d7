#include "tabattack/constraints.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <queue>
#include <sstream>

#include "tabattack/csv.hpp"

namespace tabattack {

namespace {
constexpr double kStrictTau = 1e-6;    // margin for < and >
constexpr double kDivGuard = 1e-12;    // |denominator| below this trips the guard
constexpr double kDivLarge = 1e12;
}  // namespace

// ---------------------------------------------------------------------------
// AST constructors and equality
// ---------------------------------------------------------------------------

NumExprPtr NumExpr::constant(double v) {
    auto e = std::make_shared<NumExpr>();
    e->kind = Kind::constant;
    e->value = v;
    return e;
}

NumExprPtr NumExpr::feat(int index) {
    auto e = std::make_shared<NumExpr>();
    e->kind = Kind::feature;
    e->feature = index;
    return e;
}

NumExprPtr NumExpr::orig(int index) {
    auto e = std::make_shared<NumExpr>();
    e->kind = Kind::orig_feature;
    e->feature = index;
    return e;
}

NumExprPtr NumExpr::binop(char op, NumExprPtr l, NumExprPtr r) {
    auto e = std::make_shared<NumExpr>();
    e->kind = Kind::binop;
    e->op = op;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
}

AstPtr ConstraintAst::conj(AstPtr l, AstPtr r) {
    auto c = std::make_shared<ConstraintAst>();
    c->kind = Kind::conj;
    c->lhs = std::move(l);
    c->rhs = std::move(r);
    return c;
}

AstPtr ConstraintAst::disj(AstPtr l, AstPtr r) {
    auto c = std::make_shared<ConstraintAst>();
    c->kind = Kind::disj;
    c->lhs = std::move(l);
    c->rhs = std::move(r);
    return c;
}

AstPtr ConstraintAst::cmp(CmpOp op, NumExprPtr a, NumExprPtr b) {
    auto c = std::make_shared<ConstraintAst>();
    c->kind = Kind::cmp;
    c->op = op;
    c->a = std::move(a);
    c->b = std::move(b);
    return c;
}

AstPtr ConstraintAst::member(int feature, std::vector<NumExprPtr> members) {
    if (members.empty()) throw std::invalid_argument("membership constraint with empty set");
    auto c = std::make_shared<ConstraintAst>();
    c->kind = Kind::member;
    c->member_feature = feature;
    c->members = std::move(members);
    return c;
}

bool equal(const NumExpr& a, const NumExpr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case NumExpr::Kind::constant: return a.value == b.value;
        case NumExpr::Kind::feature:
        case NumExpr::Kind::orig_feature: return a.feature == b.feature;
        case NumExpr::Kind::binop:
            return a.op == b.op && equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
    }
    return false;
}

bool equal(const ConstraintAst& a, const ConstraintAst& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case ConstraintAst::Kind::conj:
        case ConstraintAst::Kind::disj:
            return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
        case ConstraintAst::Kind::cmp:
            return a.op == b.op && equal(*a.a, *b.a) && equal(*a.b, *b.b);
        case ConstraintAst::Kind::member: {
            if (a.member_feature != b.member_feature || a.members.size() != b.members.size()) return false;
            for (size_t i = 0; i < a.members.size(); ++i) {
                if (!equal(*a.members[i], *b.members[i])) return false;
            }
            return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Constraint set and repair plan
// ---------------------------------------------------------------------------

namespace {

void collect_features(const NumExpr& e, std::vector<int>& out) {
    switch (e.kind) {
        case NumExpr::Kind::constant:
        case NumExpr::Kind::orig_feature: return;  // orig() reads x_orig, not x
        case NumExpr::Kind::feature: out.push_back(e.feature); return;
        case NumExpr::Kind::binop:
            collect_features(*e.lhs, out);
            collect_features(*e.rhs, out);
            return;
    }
}

bool mentions(const NumExpr& e, int feature) {
    std::vector<int> feats;
    collect_features(e, feats);
    return std::find(feats.begin(), feats.end(), feature) != feats.end();
}

/// Equality assignments reachable through top-level conjunctions.
void collect_assignments(const AstPtr& c, std::vector<ConstraintSet::Assignment>& out) {
    switch (c->kind) {
        case ConstraintAst::Kind::conj:
            collect_assignments(c->lhs, out);
            collect_assignments(c->rhs, out);
            return;
        case ConstraintAst::Kind::disj:
        case ConstraintAst::Kind::member:
            return;
        case ConstraintAst::Kind::cmp: {
            if (c->op != CmpOp::eq) return;
            if (c->a->kind == NumExpr::Kind::feature && !mentions(*c->b, c->a->feature)) {
                out.push_back({c->a->feature, c->b});
            } else if (c->b->kind == NumExpr::Kind::feature && !mentions(*c->a, c->b->feature)) {
                out.push_back({c->b->feature, c->a});
            }
            return;
        }
    }
}

}  // namespace

ConstraintSet::ConstraintSet(std::vector<AstPtr> constraints, std::vector<std::string> feature_names,
                             double tolerance)
    : constraints_(std::move(constraints)), feature_names_(std::move(feature_names)), tolerance_(tolerance) {
    build_repair_plan();
}

ConstraintSet::ConstraintSet(const ConstraintSet& other)
    : constraints_(other.constraints_),
      feature_names_(other.feature_names_),
      tolerance_(other.tolerance_),
      repair_plan_(other.repair_plan_) {}

ConstraintSet& ConstraintSet::operator=(const ConstraintSet& other) {
    constraints_ = other.constraints_;
    feature_names_ = other.feature_names_;
    tolerance_ = other.tolerance_;
    repair_plan_ = other.repair_plan_;
    return *this;
}

void ConstraintSet::build_repair_plan() {
    std::vector<Assignment> assignments;
    for (const auto& c : constraints_) collect_assignments(c, assignments);

    std::map<int, size_t> by_target;
    for (size_t i = 0; i < assignments.size(); ++i) {
        auto [it, inserted] = by_target.emplace(assignments[i].feature, i);
        if (!inserted) {
            const auto& name = feature_names_.at(static_cast<size_t>(assignments[i].feature));
            throw std::invalid_argument("constraints assign feature \"" + name + "\" from two equalities");
        }
    }

    // Kahn topological sort over assignment dependencies.
    std::map<int, std::vector<int>> dependents;  // feature -> targets needing it
    std::map<int, int> indegree;
    for (const auto& [target, idx] : by_target) indegree[target] = 0;
    for (const auto& [target, idx] : by_target) {
        std::vector<int> feats;
        collect_features(*assignments[idx].expr, feats);
        std::sort(feats.begin(), feats.end());
        feats.erase(std::unique(feats.begin(), feats.end()), feats.end());
        for (int f : feats) {
            if (by_target.count(f)) {
                dependents[f].push_back(target);
                ++indegree[target];
            }
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;  // stable order
    for (const auto& [target, deg] : indegree) {
        if (deg == 0) ready.push(target);
    }
    while (!ready.empty()) {
        int t = ready.top();
        ready.pop();
        repair_plan_.push_back(assignments[by_target[t]]);
        for (int dep : dependents[t]) {
            if (--indegree[dep] == 0) ready.push(dep);
        }
    }
    if (repair_plan_.size() != by_target.size()) {
        throw std::invalid_argument("cyclic equality constraints: repair order undefined");
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

ConstraintParseError::ConstraintParseError(int line_, int column_, const std::string& message)
    : std::runtime_error("line " + std::to_string(line_) + ", column " + std::to_string(column_) + ": " + message),
      line(line_),
      column(column_) {}

namespace {

struct Token {
    enum class Kind { number, ident, op, end };
    Kind kind = Kind::end;
    std::string text;
    double number = 0.0;
    int column = 0;
};

class LineLexer {
public:
    LineLexer(const std::string& line, int line_no) : line_(line), line_no_(line_no) { advance(); }

    const Token& peek() const { return current_; }
    Token next() {
        Token t = current_;
        advance();
        return t;
    }

    struct State {
        size_t pos;
        Token token;
    };
    State save() const { return {pos_, current_}; }
    void restore(const State& s) {
        pos_ = s.pos;
        current_ = s.token;
    }
    [[noreturn]] void fail(const std::string& msg, int column) const {
        throw ConstraintParseError(line_no_, column, msg);
    }
    int line_no() const { return line_no_; }

private:
    void advance() {
        while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t')) ++pos_;
        current_ = Token{};
        current_.column = static_cast<int>(pos_) + 1;
        if (pos_ >= line_.size() || line_[pos_] == '#') {
            current_.kind = Token::Kind::end;
            return;
        }
        char c = line_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t start = pos_;
            while (pos_ < line_.size() &&
                   (std::isdigit(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '.' ||
                    line_[pos_] == 'e' || line_[pos_] == 'E' ||
                    ((line_[pos_] == '+' || line_[pos_] == '-') && pos_ > start &&
                     (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E')))) {
                ++pos_;
            }
            current_.text = line_.substr(start, pos_ - start);
            double v;
            if (!csv::parse_double(current_.text, v)) fail("bad number \"" + current_.text + "\"", current_.column);
            current_.kind = Token::Kind::number;
            current_.number = v;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < line_.size() &&
                   (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_')) {
                ++pos_;
            }
            current_.kind = Token::Kind::ident;
            current_.text = line_.substr(start, pos_ - start);
            return;
        }
        static const char* two_char[] = {"<=", ">=", "!="};
        for (const char* op : two_char) {
            if (line_.compare(pos_, 2, op) == 0) {
                current_.kind = Token::Kind::op;
                current_.text = op;
                pos_ += 2;
                return;
            }
        }
        if (std::strchr("+-*/()<>={},", c)) {
            current_.kind = Token::Kind::op;
            current_.text = std::string(1, c);
            ++pos_;
            return;
        }
        fail(std::string("unexpected character '") + c + "'", current_.column);
    }

    const std::string& line_;
    int line_no_;
    size_t pos_ = 0;
    Token current_;
};

class LineParser {
public:
    LineParser(LineLexer& lex, const std::vector<FeatureSpec>& specs) : lex_(lex), specs_(specs) {}

    AstPtr parse_constraint() {
        AstPtr c = parse_or();
        const Token& t = lex_.peek();
        if (t.kind != Token::Kind::end) lex_.fail("unexpected trailing input \"" + t.text + "\"", t.column);
        return c;
    }

private:
    bool at_op(const char* s) const {
        return lex_.peek().kind == Token::Kind::op && lex_.peek().text == s;
    }
    bool at_keyword(const char* s) const {
        return lex_.peek().kind == Token::Kind::ident && lex_.peek().text == s;
    }

    AstPtr parse_or() {
        AstPtr left = parse_and();
        while (at_keyword("or")) {
            lex_.next();
            left = ConstraintAst::disj(left, parse_and());
        }
        return left;
    }

    AstPtr parse_and() {
        AstPtr left = parse_atom();
        while (at_keyword("and")) {
            lex_.next();
            left = ConstraintAst::conj(left, parse_atom());
        }
        return left;
    }

    // comparison, membership, or a parenthesized boolean formula
    AstPtr parse_atom() {
        Token first = lex_.peek();
        if (first.kind == Token::Kind::ident && first.text != "orig" && first.text != "and" && first.text != "or") {
            int ident_feature = feature_index_or_fail(first);
            lex_.next();
            if (at_keyword("in")) {
                lex_.next();
                return parse_membership(ident_feature, first.column);
            }
            return finish_comparison(continue_expr(NumExpr::feat(ident_feature)), first.column);
        }
        if (at_op("(")) {
            // '(' may open a boolean group or the numeric left operand of a
            // comparison. Try the numeric reading, backtrack to boolean.
            auto state = lex_.save();
            try {
                NumExprPtr a = parse_sum();
                return finish_comparison(std::move(a), first.column);
            } catch (const ConstraintParseError&) {
                lex_.restore(state);
                return parse_paren_boolean();
            }
        }
        return finish_comparison(parse_sum(), first.column);
    }

    AstPtr parse_paren_boolean() {
        Token open = lex_.next();  // consume '('
        AstPtr inner = parse_or();
        if (!at_op(")")) lex_.fail("expected ')'", lex_.peek().column);
        lex_.next();
        const Token& t = lex_.peek();
        if (t.kind == Token::Kind::op &&
            (t.text == "<" || t.text == "<=" || t.text == "=" || t.text == "!=" || t.text == ">=" ||
             t.text == ">" || t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/")) {
            lex_.fail("type error: boolean expression where numeric expected", open.column);
        }
        return inner;
    }

    AstPtr parse_membership(int feature, int column) {
        if (!at_op("{")) lex_.fail("expected '{' after \"in\"", lex_.peek().column);
        lex_.next();
        std::vector<NumExprPtr> members;
        if (at_op("}")) lex_.fail("membership set must not be empty", lex_.peek().column);
        members.push_back(parse_sum());
        while (at_op(",")) {
            lex_.next();
            members.push_back(parse_sum());
        }
        if (!at_op("}")) lex_.fail("expected '}' in membership set", lex_.peek().column);
        lex_.next();
        (void)column;
        return ConstraintAst::member(feature, std::move(members));
    }

    AstPtr finish_comparison(NumExprPtr a, int start_column) {
        const Token& t = lex_.peek();
        CmpOp op;
        if (t.kind == Token::Kind::op && t.text == "<") op = CmpOp::lt;
        else if (t.kind == Token::Kind::op && t.text == "<=") op = CmpOp::le;
        else if (t.kind == Token::Kind::op && t.text == "=") op = CmpOp::eq;
        else if (t.kind == Token::Kind::op && t.text == "!=") op = CmpOp::ne;
        else if (t.kind == Token::Kind::op && t.text == ">=") op = CmpOp::ge;
        else if (t.kind == Token::Kind::op && t.text == ">") op = CmpOp::gt;
        else lex_.fail("expected a comparison operator", start_column);
        lex_.next();
        NumExprPtr b = parse_sum();
        return ConstraintAst::cmp(op, std::move(a), std::move(b));
    }

    // Continues +/- and */ chains after an already-parsed primary.
    NumExprPtr continue_expr(NumExprPtr primary) {
        NumExprPtr term = continue_product(std::move(primary));
        return continue_sum(std::move(term));
    }

    NumExprPtr continue_sum(NumExprPtr left) {
        while (at_op("+") || at_op("-")) {
            char op = lex_.next().text[0];
            left = NumExpr::binop(op, std::move(left), parse_product());
        }
        return left;
    }

    NumExprPtr continue_product(NumExprPtr left) {
        while (at_op("*") || at_op("/")) {
            char op = lex_.next().text[0];
            left = NumExpr::binop(op, std::move(left), parse_primary());
        }
        return left;
    }

    NumExprPtr parse_sum() { return continue_sum(parse_product()); }

    NumExprPtr parse_product() { return continue_product(parse_primary()); }

    NumExprPtr parse_primary() {
        Token t = lex_.peek();
        if (t.kind == Token::Kind::number) {
            lex_.next();
            return NumExpr::constant(t.number);
        }
        if (t.kind == Token::Kind::op && t.text == "-") {
            lex_.next();
            NumExprPtr operand = parse_primary();
            if (operand->kind == NumExpr::Kind::constant) return NumExpr::constant(-operand->value);
            return NumExpr::binop('-', NumExpr::constant(0.0), operand);
        }
        if (t.kind == Token::Kind::op && t.text == "(") {
            lex_.next();
            NumExprPtr e = parse_sum();
            const Token& after = lex_.peek();
            if (after.kind == Token::Kind::op &&
                (after.text == "<" || after.text == "<=" || after.text == "=" || after.text == "!=" ||
                 after.text == ">=" || after.text == ">")) {
                lex_.fail("type error: boolean expression where numeric expected", t.column);
            }
            if (at_keyword("and") || at_keyword("or")) {
                lex_.fail("type error: boolean expression where numeric expected", t.column);
            }
            if (!at_op(")")) lex_.fail("expected ')'", lex_.peek().column);
            lex_.next();
            return e;
        }
        if (t.kind == Token::Kind::ident && t.text == "orig") {
            lex_.next();
            if (!at_op("(")) lex_.fail("expected '(' after orig", lex_.peek().column);
            lex_.next();
            Token name = lex_.peek();
            if (name.kind != Token::Kind::ident) lex_.fail("expected feature name in orig()", name.column);
            int idx = feature_index_or_fail(name);
            lex_.next();
            if (!at_op(")")) lex_.fail("expected ')' after orig argument", lex_.peek().column);
            lex_.next();
            return NumExpr::orig(idx);
        }
        if (t.kind == Token::Kind::ident) {
            if (t.text == "and" || t.text == "or" || t.text == "in") {
                lex_.fail("unexpected keyword \"" + t.text + "\" in numeric expression", t.column);
            }
            int idx = feature_index_or_fail(t);
            lex_.next();
            return NumExpr::feat(idx);
        }
        lex_.fail(t.kind == Token::Kind::end ? "unexpected end of line" : "unexpected token \"" + t.text + "\"",
                  t.column);
    }

    int feature_index_or_fail(const Token& t) const {
        for (size_t i = 0; i < specs_.size(); ++i) {
            if (specs_[i].name == t.text) return static_cast<int>(i);
        }
        lex_.fail("unknown feature name \"" + t.text + "\"", t.column);
    }

    LineLexer& lex_;
    const std::vector<FeatureSpec>& specs_;
};

}  // namespace

ConstraintSet parse_constraints(const std::string& text, const std::vector<FeatureSpec>& specs, double tolerance) {
    std::vector<AstPtr> constraints;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        LineLexer lex(line, line_no);
        if (lex.peek().kind == Token::Kind::end) continue;  // blank or comment-only
        LineParser parser(lex, specs);
        constraints.push_back(parser.parse_constraint());
    }
    std::vector<std::string> names;
    names.reserve(specs.size());
    for (const auto& s : specs) names.push_back(s.name);
    return ConstraintSet(std::move(constraints), std::move(names), tolerance);
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

std::string print_expr(const NumExpr& e, const std::vector<std::string>& names) {
    switch (e.kind) {
        case NumExpr::Kind::constant: return csv::format_double(e.value);
        case NumExpr::Kind::feature: return names.at(static_cast<size_t>(e.feature));
        case NumExpr::Kind::orig_feature: return "orig(" + names.at(static_cast<size_t>(e.feature)) + ")";
        case NumExpr::Kind::binop:
            return "(" + print_expr(*e.lhs, names) + " " + std::string(1, e.op) + " " +
                   print_expr(*e.rhs, names) + ")";
    }
    return "";
}

namespace {
const char* cmp_text(CmpOp op) {
    switch (op) {
        case CmpOp::lt: return "<";
        case CmpOp::le: return "<=";
        case CmpOp::eq: return "=";
        case CmpOp::ne: return "!=";
        case CmpOp::ge: return ">=";
        case CmpOp::gt: return ">";
    }
    return "<=";
}
}  // namespace

std::string print_constraint(const ConstraintAst& c, const std::vector<std::string>& names) {
    switch (c.kind) {
        case ConstraintAst::Kind::conj:
            return "(" + print_constraint(*c.lhs, names) + " and " + print_constraint(*c.rhs, names) + ")";
        case ConstraintAst::Kind::disj:
            return "(" + print_constraint(*c.lhs, names) + " or " + print_constraint(*c.rhs, names) + ")";
        case ConstraintAst::Kind::cmp:
            return print_expr(*c.a, names) + " " + cmp_text(c.op) + " " + print_expr(*c.b, names);
        case ConstraintAst::Kind::member: {
            std::string out = names.at(static_cast<size_t>(c.member_feature)) + " in {";
            for (size_t i = 0; i < c.members.size(); ++i) {
                if (i) out += ", ";
                out += print_expr(*c.members[i], names);
            }
            return out + "}";
        }
    }
    return "";
}

std::string print_constraints(const ConstraintSet& set) {
    std::string out;
    for (const auto& c : set.constraints()) {
        out += print_constraint(*c, set.feature_names());
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double eval_expr(const NumExpr& e, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                 const ConstraintSet& set, bool* guard_hit) {
    switch (e.kind) {
        case NumExpr::Kind::constant: return e.value;
        case NumExpr::Kind::feature: return x[e.feature];
        case NumExpr::Kind::orig_feature: return x_orig[e.feature];
        case NumExpr::Kind::binop: {
            double a = eval_expr(*e.lhs, x, x_orig, set, guard_hit);
            double b = eval_expr(*e.rhs, x, x_orig, set, guard_hit);
            switch (e.op) {
                case '+': return a + b;
                case '-': return a - b;
                case '*': return a * b;
                case '/':
                    if (std::abs(b) < kDivGuard) {
                        set.note_division_guard();
                        if (guard_hit) *guard_hit = true;
                        double sign = (a < 0) == (b < 0) ? 1.0 : -1.0;
                        return a == 0.0 ? 0.0 : sign * kDivLarge;
                    }
                    return a / b;
            }
            return 0.0;
        }
    }
    return 0.0;
}

namespace {

bool check_node(const ConstraintAst& c, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                const ConstraintSet& set) {
    switch (c.kind) {
        case ConstraintAst::Kind::conj:
            return check_node(*c.lhs, x, x_orig, set) && check_node(*c.rhs, x, x_orig, set);
        case ConstraintAst::Kind::disj:
            return check_node(*c.lhs, x, x_orig, set) || check_node(*c.rhs, x, x_orig, set);
        case ConstraintAst::Kind::cmp: {
            bool guard = false;
            double a = eval_expr(*c.a, x, x_orig, set, &guard);
            double b = eval_expr(*c.b, x, x_orig, set, &guard);
            if (guard) return false;  // near-zero division: treat as unsatisfied
            switch (c.op) {
                case CmpOp::lt: return a - b + kStrictTau <= 0.0;
                case CmpOp::le: return a <= b;
                case CmpOp::eq: return std::abs(a - b) <= set.tolerance();
                case CmpOp::ne: return std::abs(a - b) > set.tolerance();
                case CmpOp::ge: return b <= a;
                case CmpOp::gt: return b - a + kStrictTau <= 0.0;
            }
            return false;
        }
        case ConstraintAst::Kind::member: {
            bool guard = false;
            double v = x[c.member_feature];
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : c.members) {
                best = std::min(best, std::abs(v - eval_expr(*m, x, x_orig, set, &guard)));
            }
            if (guard) return false;
            return best <= set.tolerance();
        }
    }
    return false;
}

double penalty_node(const ConstraintAst& c, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                    const ConstraintSet& set) {
    switch (c.kind) {
        case ConstraintAst::Kind::conj:
            return penalty_node(*c.lhs, x, x_orig, set) + penalty_node(*c.rhs, x, x_orig, set);
        case ConstraintAst::Kind::disj:
            return std::min(penalty_node(*c.lhs, x, x_orig, set), penalty_node(*c.rhs, x, x_orig, set));
        case ConstraintAst::Kind::cmp: {
            double a = eval_expr(*c.a, x, x_orig, set);
            double b = eval_expr(*c.b, x, x_orig, set);
            switch (c.op) {
                case CmpOp::lt: return std::max(0.0, a - b + kStrictTau);
                case CmpOp::le: return std::max(0.0, a - b);
                case CmpOp::eq: {
                    double d = std::abs(a - b);
                    return d <= set.tolerance() ? 0.0 : d;
                }
                case CmpOp::ne: return std::max(0.0, set.tolerance() - std::abs(a - b));
                case CmpOp::ge: return std::max(0.0, b - a);
                case CmpOp::gt: return std::max(0.0, b - a + kStrictTau);
            }
            return 0.0;
        }
        case ConstraintAst::Kind::member: {
            double v = x[c.member_feature];
            double best = std::numeric_limits<double>::infinity();
            for (const auto& m : c.members) {
                best = std::min(best, std::abs(v - eval_expr(*m, x, x_orig, set)));
            }
            return best <= set.tolerance() ? 0.0 : best;
        }
    }
    return 0.0;
}

/// Adds coef * d(expr)/dx to out. Guarded divisions contribute nothing.
void accumulate_expr_gradient(const NumExpr& e, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                              const ConstraintSet& set, double coef, Eigen::VectorXd& out) {
    switch (e.kind) {
        case NumExpr::Kind::constant:
        case NumExpr::Kind::orig_feature: return;
        case NumExpr::Kind::feature:
            out[e.feature] += coef;
            return;
        case NumExpr::Kind::binop: {
            switch (e.op) {
                case '+':
                    accumulate_expr_gradient(*e.lhs, x, x_orig, set, coef, out);
                    accumulate_expr_gradient(*e.rhs, x, x_orig, set, coef, out);
                    return;
                case '-':
                    accumulate_expr_gradient(*e.lhs, x, x_orig, set, coef, out);
                    accumulate_expr_gradient(*e.rhs, x, x_orig, set, -coef, out);
                    return;
                case '*': {
                    double a = eval_expr(*e.lhs, x, x_orig, set);
                    double b = eval_expr(*e.rhs, x, x_orig, set);
                    accumulate_expr_gradient(*e.lhs, x, x_orig, set, coef * b, out);
                    accumulate_expr_gradient(*e.rhs, x, x_orig, set, coef * a, out);
                    return;
                }
                case '/': {
                    double a = eval_expr(*e.lhs, x, x_orig, set);
                    double b = eval_expr(*e.rhs, x, x_orig, set);
                    if (std::abs(b) < kDivGuard) return;  // locally constant under the guard
                    accumulate_expr_gradient(*e.lhs, x, x_orig, set, coef / b, out);
                    accumulate_expr_gradient(*e.rhs, x, x_orig, set, -coef * a / (b * b), out);
                    return;
                }
            }
            return;
        }
    }
}

void accumulate_penalty_gradient(const ConstraintAst& c, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig,
                                 const ConstraintSet& set, double coef, Eigen::VectorXd& out) {
    switch (c.kind) {
        case ConstraintAst::Kind::conj:
            accumulate_penalty_gradient(*c.lhs, x, x_orig, set, coef, out);
            accumulate_penalty_gradient(*c.rhs, x, x_orig, set, coef, out);
            return;
        case ConstraintAst::Kind::disj: {
            double pl = penalty_node(*c.lhs, x, x_orig, set);
            double pr = penalty_node(*c.rhs, x, x_orig, set);
            accumulate_penalty_gradient(pl <= pr ? *c.lhs : *c.rhs, x, x_orig, set, coef, out);
            return;
        }
        case ConstraintAst::Kind::cmp: {
            double a = eval_expr(*c.a, x, x_orig, set);
            double b = eval_expr(*c.b, x, x_orig, set);
            double diff = a - b;
            auto add_diff = [&](double k) {
                accumulate_expr_gradient(*c.a, x, x_orig, set, coef * k, out);
                accumulate_expr_gradient(*c.b, x, x_orig, set, -coef * k, out);
            };
            switch (c.op) {
                case CmpOp::lt:
                    if (diff + kStrictTau > 0.0) add_diff(1.0);
                    return;
                case CmpOp::le:
                    if (diff > 0.0) add_diff(1.0);
                    return;
                case CmpOp::eq:
                    if (std::abs(diff) > set.tolerance()) add_diff(diff > 0 ? 1.0 : -1.0);
                    return;
                case CmpOp::ne:
                    if (set.tolerance() - std::abs(diff) > 0.0 && diff != 0.0) add_diff(diff > 0 ? -1.0 : 1.0);
                    return;
                case CmpOp::ge:
                    if (diff < 0.0) add_diff(-1.0);
                    return;
                case CmpOp::gt:
                    if (-diff + kStrictTau > 0.0) add_diff(-1.0);
                    return;
            }
            return;
        }
        case ConstraintAst::Kind::member: {
            double v = x[c.member_feature];
            double best = std::numeric_limits<double>::infinity();
            const NumExpr* nearest = nullptr;
            for (const auto& m : c.members) {
                double dist = std::abs(v - eval_expr(*m, x, x_orig, set));
                if (dist < best) {
                    best = dist;
                    nearest = m.get();
                }
            }
            if (best <= set.tolerance() || !nearest) return;
            double mval = eval_expr(*nearest, x, x_orig, set);
            double s = v - mval > 0 ? 1.0 : -1.0;
            out[c.member_feature] += coef * s;
            accumulate_expr_gradient(*nearest, x, x_orig, set, -coef * s, out);
            return;
        }
    }
}

}  // namespace

bool check(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig) {
    for (const auto& c : set.constraints()) {
        if (!check_node(*c, x, x_orig, set)) return false;
    }
    return true;
}

double penalty(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig) {
    double total = 0.0;
    for (const auto& c : set.constraints()) total += penalty_node(*c, x, x_orig, set);
    return total;
}

Eigen::VectorXd penalty_gradient(const ConstraintSet& set, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& x_orig) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    for (const auto& c : set.constraints()) accumulate_penalty_gradient(*c, x, x_orig, set, 1.0, grad);
    return grad;
}

Eigen::VectorXd repair(const ConstraintSet& set, const Eigen::VectorXd& x, const Eigen::VectorXd& x_orig) {
    Eigen::VectorXd y = x;
    for (const auto& assign : set.repair_plan()) {
        y[assign.feature] = eval_expr(*assign.expr, y, x_orig, set);
    }
    return y;
}

}  // namespace tabattack
