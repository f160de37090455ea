#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rsb/core.hpp"

namespace rsb {

// Coefficient expressions are parsed once and evaluated many times against a
// slot vector whose layout is fixed at parse time (e.g. {t, x1, .., z1, ..}).
// Parsing is total on the documented grammar; evaluation either returns a
// finite value or throws EvalError.

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at position " + std::to_string(pos)), position(pos) {}
  std::size_t position;
};

class Expr {
 public:
  Expr() = default;

  // vars: allowed variable names, in slot order. consts: named constants
  // (declared parameters) inlined at parse time.
  static Expr parse(const std::string& source, const std::vector<std::string>& vars,
                    const std::map<std::string, double>& consts = {});

  static Expr constant(double v);

  bool empty() const { return root_ == nullptr; }
  double eval(std::span<const double> slots) const;
  std::string print() const;
  bool same_ast(const Expr& other) const;
  const std::string& source() const { return src_; }

  struct Node;  // exposed for the evaluator translation unit

 private:
  std::shared_ptr<const Node> root_;
  std::string src_;
  std::vector<std::string> vars_;
  int nslots_ = 0;
};

}  // namespace rsb
