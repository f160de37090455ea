#include "rsb/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace rsb {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

enum class Fn { Exp, Log, Sin, Cos, Sqrt, Abs, Min, Max, Pow };

const char* fn_name(Fn f) {
  switch (f) {
    case Fn::Exp: return "exp";
    case Fn::Log: return "log";
    case Fn::Sin: return "sin";
    case Fn::Cos: return "cos";
    case Fn::Sqrt: return "sqrt";
    case Fn::Abs: return "abs";
    case Fn::Min: return "min";
    case Fn::Max: return "max";
    case Fn::Pow: return "pow";
  }
  return "?";
}

int fn_arity(Fn f) {
  switch (f) {
    case Fn::Min:
    case Fn::Max:
    case Fn::Pow: return 2;
    default: return 1;
  }
}

}  // namespace

struct Expr::Node {
  enum class Kind { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
  double num = 0;
  int slot = -1;
  Fn fn = Fn::Exp;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;
using Kind = Expr::Node::Kind;

NodeP make(Kind k, NodeP a = nullptr, NodeP b = nullptr) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodeP make_num(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Kind::Num;
  n->num = v;
  return n;
}

class Parser {
 public:
  Parser(const std::string& s, const std::vector<std::string>& vars,
         const std::map<std::string, double>& consts)
      : s_(s), vars_(vars), consts_(consts) {}

  NodeP run() {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("empty expression", 0);
    NodeP e = expr();
    skip_ws();
    if (pos_ < s_.size()) throw ParseError("unexpected trailing input", pos_);
    return e;
  }

 private:
  const std::string& s_;
  const std::vector<std::string>& vars_;
  const std::map<std::string, double>& consts_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  NodeP expr() {
    NodeP lhs = term();
    for (;;) {
      if (eat('+'))
        lhs = make(Kind::Add, lhs, term());
      else if (eat('-'))
        lhs = make(Kind::Sub, lhs, term());
      else
        return lhs;
    }
  }

  NodeP term() {
    NodeP lhs = factor();
    for (;;) {
      if (eat('*'))
        lhs = make(Kind::Mul, lhs, factor());
      else if (eat('/'))
        lhs = make(Kind::Div, lhs, factor());
      else
        return lhs;
    }
  }

  // '-' binds looser than '^': -x^2 parses as -(x^2); 2^-3 is allowed.
  NodeP factor() {
    if (eat('-')) {
      NodeP inner = factor();
      if (inner->kind == Kind::Num) return make_num(-inner->num);  // fold literal sign
      return make(Kind::Neg, inner);
    }
    if (eat('+')) return factor();
    return power();
  }

  NodeP power() {
    NodeP base = primary();
    if (eat('^')) return make(Kind::Pow, base, factor());
    return base;
  }

  NodeP primary() {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of expression", pos_);
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodeP e = expr();
      if (!eat(')')) throw ParseError("expected ')'", pos_);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  NodeP number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
      ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;  // 'e' belongs to an identifier-like token, not this number
      }
    }
    try {
      return make_num(std::stod(s_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      throw ParseError("malformed number", start);
    }
  }

  NodeP identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string name = s_.substr(start, pos_ - start);

    if (peek() == '(') {
      Fn fn;
      if (name == "exp") fn = Fn::Exp;
      else if (name == "log") fn = Fn::Log;
      else if (name == "sin") fn = Fn::Sin;
      else if (name == "cos") fn = Fn::Cos;
      else if (name == "sqrt") fn = Fn::Sqrt;
      else if (name == "abs") fn = Fn::Abs;
      else if (name == "min") fn = Fn::Min;
      else if (name == "max") fn = Fn::Max;
      else if (name == "pow") fn = Fn::Pow;
      else throw ParseError("unknown function '" + name + "'", start);
      eat('(');
      NodeP a = expr();
      NodeP b;
      if (fn_arity(fn) == 2) {
        if (!eat(',')) throw ParseError("expected ',' in 2-argument function", pos_);
        b = expr();
      }
      if (!eat(')')) throw ParseError("expected ')'", pos_);
      auto n = std::make_shared<Expr::Node>();
      n->kind = Kind::Call;
      n->fn = fn;
      n->a = a;
      n->b = b;
      return n;
    }

    for (std::size_t k = 0; k < vars_.size(); ++k) {
      if (vars_[k] == name) {
        auto n = std::make_shared<Expr::Node>();
        n->kind = Kind::Var;
        n->slot = static_cast<int>(k);
        return n;
      }
    }
    if (auto it = consts_.find(name); it != consts_.end()) return make_num(it->second);
    throw ParseError("unknown identifier '" + name + "'", start);
  }
};

double eval_node(const Expr::Node& n, std::span<const double> slots) {
  switch (n.kind) {
    case Kind::Num: return n.num;
    case Kind::Var: return slots[static_cast<std::size_t>(n.slot)];
    case Kind::Neg: return -eval_node(*n.a, slots);
    case Kind::Add: return eval_node(*n.a, slots) + eval_node(*n.b, slots);
    case Kind::Sub: return eval_node(*n.a, slots) - eval_node(*n.b, slots);
    case Kind::Mul: return eval_node(*n.a, slots) * eval_node(*n.b, slots);
    case Kind::Div: return eval_node(*n.a, slots) / eval_node(*n.b, slots);
    case Kind::Pow: return std::pow(eval_node(*n.a, slots), eval_node(*n.b, slots));
    case Kind::Call: {
      double a = eval_node(*n.a, slots);
      switch (n.fn) {
        case Fn::Exp: return std::exp(a);
        case Fn::Log: return std::log(a);
        case Fn::Sin: return std::sin(a);
        case Fn::Cos: return std::cos(a);
        case Fn::Sqrt: return std::sqrt(a);
        case Fn::Abs: return std::fabs(a);
        case Fn::Min: return std::fmin(a, eval_node(*n.b, slots));
        case Fn::Max: return std::fmax(a, eval_node(*n.b, slots));
        case Fn::Pow: return std::pow(a, eval_node(*n.b, slots));
      }
    }
  }
  return 0;
}

int precedence(Kind k) {
  switch (k) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    default: return 5;
  }
}

void print_node(const Expr::Node& n, const std::vector<std::string>& vars, std::string& out);

void print_child(const Expr::Node& child, int parent_prec, bool force_parens,
                 const std::vector<std::string>& vars, std::string& out) {
  bool parens = force_parens || precedence(child.kind) < parent_prec;
  if (parens) out += '(';
  print_node(child, vars, out);
  if (parens) out += ')';
}

void print_node(const Expr::Node& n, const std::vector<std::string>& vars, std::string& out) {
  switch (n.kind) {
    case Kind::Num:
      if (n.num < 0) {
        out += '(' + format_g17(n.num) + ')';
      } else {
        out += format_g17(n.num);
      }
      return;
    case Kind::Var: out += vars[static_cast<std::size_t>(n.slot)]; return;
    case Kind::Neg:
      out += '-';
      print_child(*n.a, precedence(Kind::Neg), false, vars, out);
      return;
    case Kind::Add:
      print_child(*n.a, 1, false, vars, out);
      out += " + ";
      // parenthesize an equal-precedence right child to keep the tree shape
      print_child(*n.b, 1, precedence(n.b->kind) == 1, vars, out);
      return;
    case Kind::Sub:
      print_child(*n.a, 1, false, vars, out);
      out += " - ";
      // right operand of '-' needs parens at equal precedence
      print_child(*n.b, 1, precedence(n.b->kind) == 1, vars, out);
      return;
    case Kind::Mul:
      print_child(*n.a, 2, false, vars, out);
      out += "*";
      print_child(*n.b, 2, precedence(n.b->kind) == 2, vars, out);
      return;
    case Kind::Div:
      print_child(*n.a, 2, false, vars, out);
      out += "/";
      print_child(*n.b, 2, precedence(n.b->kind) == 2, vars, out);
      return;
    case Kind::Pow:
      print_child(*n.a, 5, false, vars, out);
      out += "^";
      print_child(*n.b, 3, false, vars, out);
      return;
    case Kind::Call:
      out += fn_name(n.fn);
      out += '(';
      print_node(*n.a, vars, out);
      if (n.b) {
        out += ", ";
        print_node(*n.b, vars, out);
      }
      out += ')';
      return;
  }
}

bool same_node(const Expr::Node& a, const Expr::Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Kind::Num: return a.num == b.num;
    case Kind::Var: return a.slot == b.slot;
    case Kind::Call:
      if (a.fn != b.fn) return false;
      [[fallthrough]];
    default:
      if ((a.a == nullptr) != (b.a == nullptr) || (a.b == nullptr) != (b.b == nullptr))
        return false;
      if (a.a && !same_node(*a.a, *b.a)) return false;
      if (a.b && !same_node(*a.b, *b.b)) return false;
      return true;
  }
}

}  // namespace

Expr Expr::parse(const std::string& source, const std::vector<std::string>& vars,
                 const std::map<std::string, double>& consts) {
  if (source.empty()) throw ParseError("empty expression", 0);
  Expr e;
  e.root_ = Parser(source, vars, consts).run();
  e.src_ = source;
  e.nslots_ = static_cast<int>(vars.size());
  // keep the variable names for printing
  e.vars_ = vars;
  return e;
}

Expr Expr::constant(double v) {
  Expr e;
  e.root_ = make_num(v);
  e.src_ = format_g17(v);
  e.nslots_ = 0;
  return e;
}

double Expr::eval(std::span<const double> slots) const {
  if (!root_) throw EvalError("evaluating empty expression");
  double v = eval_node(*root_, slots);
  if (!std::isfinite(v))
    throw EvalError("expression '" + src_ + "' evaluated to a non-finite value");
  return v;
}

std::string Expr::print() const {
  if (!root_) return "";
  std::string out;
  print_node(*root_, vars_, out);
  return out;
}

bool Expr::same_ast(const Expr& other) const {
  if (!root_ || !other.root_) return root_ == other.root_;
  return same_node(*root_, *other.root_);
}

}  // namespace rsb
