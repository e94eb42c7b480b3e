// SPDX-License-Identifier: Apache-2.0
//
// Symbolic expression trees over the operator set {+, -, *, /, exp} with
// variables, tunable parameter slots (p1..pN) and numeric literals.
// Construction, evaluation, exact time-differentiation, complexity
// accounting, canonical normalization and a round-trip text form.
//
// Grammar of the text form (whitespace insignificant):
//   expr    := term (('+'|'-') term)*
//   term    := primary (('*'|'/') primary)*
//   primary := number | param | variable | 'exp' '(' expr ')' | '(' expr ')'
//   param   := 'p' [1-9][0-9]*
//   number  := ['-'] digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
// Variables are identifiers declared by the caller; 'exp' is reserved and
// identifiers of the form p<digits> always denote parameter slots.

#ifndef KINDISC_EXPRESSION_HPP
#define KINDISC_EXPRESSION_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kindisc/common.hpp"

namespace kindisc {

enum class NodeKind : std::uint8_t { Add, Sub, Mul, Div, Exp, Variable, Parameter, Literal };

inline int arity(NodeKind kind) {
  switch (kind) {
    case NodeKind::Add:
    case NodeKind::Sub:
    case NodeKind::Mul:
    case NodeKind::Div:
      return 2;
    case NodeKind::Exp:
      return 1;
    default:
      return 0;
  }
}

inline bool is_binary(NodeKind kind) { return arity(kind) == 2; }
inline bool is_leaf(NodeKind kind) { return arity(kind) == 0; }

struct Node {
  NodeKind kind = NodeKind::Literal;
  std::int32_t index = -1;  // variable or parameter slot (0-based)
  double value = 0.0;       // literal payload

  friend bool operator==(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == NodeKind::Literal) return a.value == b.value;
    if (a.kind == NodeKind::Variable || a.kind == NodeKind::Parameter) return a.index == b.index;
    return true;
  }
};

/// Immutable-by-convention expression tree stored in preorder. Copying is a
/// plain vector copy, which keeps genetic operators and parallel evaluation
/// cheap and safe.
class ExpressionTree {
public:
  ExpressionTree() = default;
  explicit ExpressionTree(std::vector<Node> preorder) : nodes_(std::move(preorder)) {}

  static ExpressionTree literal(double v) {
    return ExpressionTree({Node{NodeKind::Literal, -1, v}});
  }
  static ExpressionTree parameter(int slot) {
    return ExpressionTree({Node{NodeKind::Parameter, slot, 0.0}});
  }
  static ExpressionTree variable(int index) {
    return ExpressionTree({Node{NodeKind::Variable, index, 0.0}});
  }
  static ExpressionTree unary(NodeKind op, const ExpressionTree& a) {
    if (arity(op) != 1) throw StructuralError("unary: operator is not unary");
    std::vector<Node> out;
    out.reserve(1 + a.size());
    out.push_back(Node{op, -1, 0.0});
    out.insert(out.end(), a.nodes_.begin(), a.nodes_.end());
    return ExpressionTree(std::move(out));
  }
  static ExpressionTree binary(NodeKind op, const ExpressionTree& a, const ExpressionTree& b) {
    if (arity(op) != 2) throw StructuralError("binary: operator is not binary");
    std::vector<Node> out;
    out.reserve(1 + a.size() + b.size());
    out.push_back(Node{op, -1, 0.0});
    out.insert(out.end(), a.nodes_.begin(), a.nodes_.end());
    out.insert(out.end(), b.nodes_.begin(), b.nodes_.end());
    return ExpressionTree(std::move(out));
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Node>& nodes() const { return nodes_; }

  friend bool operator==(const ExpressionTree& a, const ExpressionTree& b) {
    return a.nodes_ == b.nodes_;
  }

private:
  std::vector<Node> nodes_;
};

/// Node count; the model-complexity measure used throughout.
inline int complexity(const ExpressionTree& tree) { return static_cast<int>(tree.size()); }

/// subtree_sizes()[i] is the node count of the subtree rooted at i.
inline std::vector<int> subtree_sizes(const ExpressionTree& tree) {
  const auto n = tree.size();
  std::vector<int> sizes(n, 1);
  // In preorder a parent precedes its children, so accumulate right-to-left
  // with a pending-children stack.
  std::vector<std::size_t> stack;
  for (std::size_t idx = n; idx-- > 0;) {
    const int k = arity(tree.node(idx).kind);
    int total = 1;
    for (int c = 0; c < k; ++c) {
      if (stack.empty()) throw StructuralError("subtree_sizes: malformed preorder");
      total += sizes[stack.back()];
      stack.pop_back();
    }
    sizes[idx] = total;
    stack.push_back(idx);
  }
  if (stack.size() != 1) throw StructuralError("subtree_sizes: dangling nodes");
  return sizes;
}

inline int depth(const ExpressionTree& tree) {
  const auto n = tree.size();
  std::vector<int> depths(n, 1);
  std::vector<std::size_t> stack;
  for (std::size_t idx = n; idx-- > 0;) {
    const int k = arity(tree.node(idx).kind);
    int d = 0;
    for (int c = 0; c < k; ++c) {
      d = std::max(d, depths[stack.back()]);
      stack.pop_back();
    }
    depths[idx] = 1 + d;
    stack.push_back(idx);
  }
  return n == 0 ? 0 : depths[0];
}

inline ExpressionTree subtree(const ExpressionTree& tree, std::size_t root,
                              const std::vector<int>& sizes) {
  std::vector<Node> out(tree.nodes().begin() + static_cast<std::ptrdiff_t>(root),
                        tree.nodes().begin() + static_cast<std::ptrdiff_t>(root) + sizes[root]);
  return ExpressionTree(std::move(out));
}

inline ExpressionTree replace_subtree(const ExpressionTree& tree, std::size_t root,
                                      const std::vector<int>& sizes,
                                      const ExpressionTree& replacement) {
  std::vector<Node> out;
  out.reserve(tree.size() - static_cast<std::size_t>(sizes[root]) + replacement.size());
  out.insert(out.end(), tree.nodes().begin(), tree.nodes().begin() + static_cast<std::ptrdiff_t>(root));
  out.insert(out.end(), replacement.nodes().begin(), replacement.nodes().end());
  out.insert(out.end(), tree.nodes().begin() + static_cast<std::ptrdiff_t>(root) + sizes[root],
             tree.nodes().end());
  return ExpressionTree(std::move(out));
}

/// One past the highest parameter slot referenced; 0 if none.
inline int parameter_span(const ExpressionTree& tree) {
  int hi = 0;
  for (const auto& nd : tree.nodes())
    if (nd.kind == NodeKind::Parameter) hi = std::max(hi, nd.index + 1);
  return hi;
}

/// Number of distinct parameter slots (d_m for slot-contiguous trees).
inline int parameter_count(const ExpressionTree& tree) {
  std::vector<bool> seen(static_cast<std::size_t>(parameter_span(tree)), false);
  int count = 0;
  for (const auto& nd : tree.nodes())
    if (nd.kind == NodeKind::Parameter && !seen[static_cast<std::size_t>(nd.index)]) {
      seen[static_cast<std::size_t>(nd.index)] = true;
      ++count;
    }
  return count;
}

/// True iff referenced slots are exactly 0..d-1 with no gaps.
inline bool parameters_contiguous(const ExpressionTree& tree) {
  return parameter_count(tree) == parameter_span(tree);
}

inline std::vector<int> referenced_variables(const ExpressionTree& tree) {
  std::vector<int> vars;
  for (const auto& nd : tree.nodes())
    if (nd.kind == NodeKind::Variable &&
        std::find(vars.begin(), vars.end(), nd.index) == vars.end())
      vars.push_back(nd.index);
  std::sort(vars.begin(), vars.end());
  return vars;
}

inline int literal_count(const ExpressionTree& tree) {
  int n = 0;
  for (const auto& nd : tree.nodes())
    if (nd.kind == NodeKind::Literal) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluates the tree. Division by zero and exp overflow propagate as IEEE
/// non-finite values; callers treat a non-finite result as fitness +inf.
/// `scratch` is reused between calls to avoid per-call allocation.
inline double evaluate(const ExpressionTree& tree, std::span<const double> params,
                       std::span<const double> vars, std::vector<double>& scratch) {
  if (tree.empty()) throw StructuralError("evaluate: empty tree");
  scratch.clear();
  const auto& nodes = tree.nodes();
  for (std::size_t idx = nodes.size(); idx-- > 0;) {
    const Node& nd = nodes[idx];
    switch (nd.kind) {
      case NodeKind::Literal:
        scratch.push_back(nd.value);
        break;
      case NodeKind::Parameter:
        if (nd.index < 0 || static_cast<std::size_t>(nd.index) >= params.size())
          throw StructuralError("evaluate: parameter slot p" + std::to_string(nd.index + 1) +
                                " out of range for theta of length " + std::to_string(params.size()));
        scratch.push_back(params[static_cast<std::size_t>(nd.index)]);
        break;
      case NodeKind::Variable:
        if (nd.index < 0 || static_cast<std::size_t>(nd.index) >= vars.size())
          throw StructuralError("evaluate: variable index out of range");
        scratch.push_back(vars[static_cast<std::size_t>(nd.index)]);
        break;
      case NodeKind::Exp: {
        double& top = scratch.back();
        top = std::exp(top);
        break;
      }
      default: {
        // Reverse preorder pushes the left operand last.
        const double lhs = scratch.back();
        scratch.pop_back();
        double& rhs = scratch.back();
        switch (nd.kind) {
          case NodeKind::Add: rhs = lhs + rhs; break;
          case NodeKind::Sub: rhs = lhs - rhs; break;
          case NodeKind::Mul: rhs = lhs * rhs; break;
          default:            rhs = lhs / rhs; break;
        }
        break;
      }
    }
  }
  if (scratch.size() != 1) throw StructuralError("evaluate: malformed tree");
  return scratch.back();
}

inline double evaluate(const ExpressionTree& tree, std::span<const double> params,
                       std::span<const double> vars) {
  std::vector<double> scratch;
  scratch.reserve(tree.size());
  return evaluate(tree, params, vars, scratch);
}

// ---------------------------------------------------------------------------
// Simplifying constructors (used by differentiation)
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_literal(const ExpressionTree& t, double v) {
  return t.size() == 1 && t.node(0).kind == NodeKind::Literal && t.node(0).value == v;
}
inline std::optional<double> literal_value(const ExpressionTree& t) {
  if (t.size() == 1 && t.node(0).kind == NodeKind::Literal) return t.node(0).value;
  return std::nullopt;
}

inline ExpressionTree make_add(const ExpressionTree& a, const ExpressionTree& b) {
  if (is_literal(a, 0.0)) return b;
  if (is_literal(b, 0.0)) return a;
  if (auto x = literal_value(a))
    if (auto y = literal_value(b))
      if (std::isfinite(*x + *y)) return ExpressionTree::literal(*x + *y);
  return ExpressionTree::binary(NodeKind::Add, a, b);
}

inline ExpressionTree make_sub(const ExpressionTree& a, const ExpressionTree& b) {
  if (is_literal(b, 0.0)) return a;
  if (auto x = literal_value(a))
    if (auto y = literal_value(b))
      if (std::isfinite(*x - *y)) return ExpressionTree::literal(*x - *y);
  return ExpressionTree::binary(NodeKind::Sub, a, b);
}

inline ExpressionTree make_mul(const ExpressionTree& a, const ExpressionTree& b) {
  if (is_literal(a, 0.0) || is_literal(b, 0.0)) return ExpressionTree::literal(0.0);
  if (is_literal(a, 1.0)) return b;
  if (is_literal(b, 1.0)) return a;
  if (auto x = literal_value(a))
    if (auto y = literal_value(b))
      if (std::isfinite(*x * *y)) return ExpressionTree::literal(*x * *y);
  return ExpressionTree::binary(NodeKind::Mul, a, b);
}

inline ExpressionTree make_div(const ExpressionTree& a, const ExpressionTree& b) {
  if (is_literal(a, 0.0)) return ExpressionTree::literal(0.0);
  if (is_literal(b, 1.0)) return a;
  if (auto x = literal_value(a))
    if (auto y = literal_value(b))
      if (*y != 0.0 && std::isfinite(*x / *y)) return ExpressionTree::literal(*x / *y);
  return ExpressionTree::binary(NodeKind::Div, a, b);
}

inline ExpressionTree make_exp(const ExpressionTree& a) {
  if (auto x = literal_value(a))
    if (std::isfinite(std::exp(*x))) return ExpressionTree::literal(std::exp(*x));
  return ExpressionTree::unary(NodeKind::Exp, a);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

/// Exact symbolic derivative with respect to variable `var_index`. The
/// operator set is closed under d/dt so the result stays in the grammar.
/// Trees referencing any other variable are rejected: rate models (functions
/// of several concentrations) are never time-differentiated.
inline ExpressionTree differentiate(const ExpressionTree& tree, int var_index = 0) {
  for (int v : referenced_variables(tree))
    if (v != var_index)
      throw StructuralError(
          "differentiate: tree references a variable other than the derivative variable");

  const auto& nodes = tree.nodes();
  const auto sizes = subtree_sizes(tree);

  // Returns {value copy, derivative} of the subtree rooted at i.
  auto recurse = [&](auto&& self, std::size_t i) -> std::pair<ExpressionTree, ExpressionTree> {
    const Node& nd = nodes[i];
    switch (nd.kind) {
      case NodeKind::Literal:
      case NodeKind::Parameter:
        return {subtree(tree, i, sizes), ExpressionTree::literal(0.0)};
      case NodeKind::Variable:
        return {subtree(tree, i, sizes), ExpressionTree::literal(1.0)};
      case NodeKind::Exp: {
        auto [a, da] = self(self, i + 1);
        return {subtree(tree, i, sizes), detail::make_mul(da, detail::make_exp(a))};
      }
      default: {
        const std::size_t li = i + 1;
        const std::size_t ri = li + static_cast<std::size_t>(sizes[li]);
        auto [a, da] = self(self, li);
        auto [b, db] = self(self, ri);
        ExpressionTree d;
        switch (nd.kind) {
          case NodeKind::Add: d = detail::make_add(da, db); break;
          case NodeKind::Sub: d = detail::make_sub(da, db); break;
          case NodeKind::Mul: d = detail::make_add(detail::make_mul(da, b), detail::make_mul(a, db)); break;
          default:
            d = detail::make_div(detail::make_sub(detail::make_mul(da, b), detail::make_mul(a, db)),
                                 detail::make_mul(b, b));
            break;
        }
        return {subtree(tree, i, sizes), std::move(d)};
      }
    }
  };
  return recurse(recurse, 0).second;
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

namespace detail {

inline void serialize_rec(const ExpressionTree& tree, std::size_t i, const std::vector<int>& sizes,
                          std::span<const std::string> var_names, bool mask_constants,
                          std::string& out) {
  const Node& nd = tree.node(i);
  switch (nd.kind) {
    case NodeKind::Literal:
      out += mask_constants ? "#" : format_double(nd.value);
      return;
    case NodeKind::Parameter:
      out += mask_constants ? "#" : "p" + std::to_string(nd.index + 1);
      return;
    case NodeKind::Variable:
      if (static_cast<std::size_t>(nd.index) < var_names.size())
        out += var_names[static_cast<std::size_t>(nd.index)];
      else
        out += "x" + std::to_string(nd.index + 1);
      return;
    case NodeKind::Exp:
      out += "exp(";
      serialize_rec(tree, i + 1, sizes, var_names, mask_constants, out);
      out += ")";
      return;
    default: {
      const std::size_t li = i + 1;
      const std::size_t ri = li + static_cast<std::size_t>(sizes[li]);
      out += "(";
      serialize_rec(tree, li, sizes, var_names, mask_constants, out);
      switch (nd.kind) {
        case NodeKind::Add: out += "+"; break;
        case NodeKind::Sub: out += "-"; break;
        case NodeKind::Mul: out += "*"; break;
        default:            out += "/"; break;
      }
      serialize_rec(tree, ri, sizes, var_names, mask_constants, out);
      out += ")";
      return;
    }
  }
}

}  // namespace detail

/// Canonical infix text with explicit parentheses; round-trips through parse().
inline std::string serialize(const ExpressionTree& tree,
                             std::span<const std::string> var_names = {}) {
  if (tree.empty()) throw StructuralError("serialize: empty tree");
  std::string out;
  out.reserve(tree.size() * 4);
  detail::serialize_rec(tree, 0, subtree_sizes(tree), var_names, false, out);
  return out;
}

/// Like serialize() but parameters and literals print as '#'. Two trees with
/// equal masked text share a structure up to constant relabeling.
inline std::string serialize_masked(const ExpressionTree& tree,
                                    std::span<const std::string> var_names = {}) {
  if (tree.empty()) throw StructuralError("serialize_masked: empty tree");
  std::string out;
  out.reserve(tree.size() * 4);
  detail::serialize_rec(tree, 0, subtree_sizes(tree), var_names, true, out);
  return out;
}

namespace detail {

struct Lexer {
  std::string_view text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  char take() {
    skip_ws();
    return text[pos++];
  }
  bool starts_number() {
    const char c = peek();
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  }
  double take_number() {
    skip_ws();
    std::size_t start = pos;
    if (pos < text.size() && text[pos] == '-') ++pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'))
      ++pos;
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      std::size_t mark = pos++;
      if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
      if (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      } else {
        pos = mark;  // 'e' belonged to something else
      }
    }
    return parse_double(text.substr(start, pos - start));
  }
  std::string take_identifier() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    return std::string(text.substr(start, pos - start));
  }
};

class Parser {
public:
  Parser(std::string_view text, std::span<const std::string> var_names)
      : lex_{text}, var_names_(var_names) {}

  ExpressionTree run() {
    ExpressionTree t = expr();
    if (!lex_.eof())
      throw ParseError("unexpected trailing input at position " + std::to_string(lex_.pos));
    return t;
  }

private:
  Lexer lex_;
  std::span<const std::string> var_names_;

  ExpressionTree expr() {
    ExpressionTree lhs = term();
    while (!lex_.eof()) {
      const char c = lex_.peek();
      if (c != '+' && c != '-') break;
      lex_.take();
      lhs = ExpressionTree::binary(c == '+' ? NodeKind::Add : NodeKind::Sub, lhs, term());
    }
    return lhs;
  }

  ExpressionTree term() {
    ExpressionTree lhs = primary();
    while (!lex_.eof()) {
      const char c = lex_.peek();
      if (c != '*' && c != '/') break;
      lex_.take();
      lhs = ExpressionTree::binary(c == '*' ? NodeKind::Mul : NodeKind::Div, lhs, primary());
    }
    return lhs;
  }

  ExpressionTree primary() {
    if (lex_.eof()) throw ParseError("unexpected end of expression");
    const char c = lex_.peek();
    if (c == '(') {
      lex_.take();
      ExpressionTree inner = expr();
      if (lex_.peek() != ')') throw ParseError("missing closing parenthesis");
      lex_.take();
      return inner;
    }
    if (c == '-') {
      // Unary minus is part of a numeric literal only.
      std::size_t mark = lex_.pos;
      lex_.take();
      if (!lex_.starts_number()) {
        lex_.pos = mark;
        throw ParseError("'-' must be followed by a numeric literal here");
      }
      return ExpressionTree::literal(-lex_.take_number());
    }
    if (lex_.starts_number()) return ExpressionTree::literal(lex_.take_number());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::string ident = lex_.take_identifier();
      if (ident == "exp") {
        if (lex_.peek() != '(') throw ParseError("exp must be followed by '('");
        lex_.take();
        ExpressionTree inner = expr();
        if (lex_.peek() != ')') throw ParseError("missing closing parenthesis after exp(...");
        lex_.take();
        return ExpressionTree::unary(NodeKind::Exp, inner);
      }
      if (auto slot = parse_param_name(ident)) return ExpressionTree::parameter(*slot);
      for (std::size_t v = 0; v < var_names_.size(); ++v)
        if (var_names_[v] == ident) return ExpressionTree::variable(static_cast<int>(v));
      throw ParseError("unknown function or variable '" + ident + "'");
    }
    throw ParseError(std::string("unexpected character '") + c + "'");
  }

  static std::optional<int> parse_param_name(const std::string& ident) {
    if (ident.size() < 2 || ident[0] != 'p') return std::nullopt;
    if (ident[1] == '0') return std::nullopt;
    for (std::size_t i = 1; i < ident.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(ident[i]))) return std::nullopt;
    return std::stoi(ident.substr(1)) - 1;
  }
};

}  // namespace detail

/// Parses grammar-valid text; rejects unknown symbols, unbalanced parentheses
/// and undeclared variable names.
inline ExpressionTree parse(std::string_view text, std::span<const std::string> var_names = {}) {
  return detail::Parser(text, var_names).run();
}

// ---------------------------------------------------------------------------
// Canonical form and parameter-slot maintenance
// ---------------------------------------------------------------------------

namespace detail {

inline ExpressionTree fold_constants_rec(const ExpressionTree& tree, std::size_t i,
                                         const std::vector<int>& sizes) {
  const Node& nd = tree.node(i);
  if (is_leaf(nd.kind)) return subtree(tree, i, sizes);
  if (nd.kind == NodeKind::Exp) {
    ExpressionTree a = fold_constants_rec(tree, i + 1, sizes);
    return make_exp(a);
  }
  const std::size_t li = i + 1;
  const std::size_t ri = li + static_cast<std::size_t>(sizes[li]);
  ExpressionTree a = fold_constants_rec(tree, li, sizes);
  ExpressionTree b = fold_constants_rec(tree, ri, sizes);
  auto va = literal_value(a);
  auto vb = literal_value(b);
  if (va && vb) {
    double v = 0.0;
    switch (nd.kind) {
      case NodeKind::Add: v = *va + *vb; break;
      case NodeKind::Sub: v = *va - *vb; break;
      case NodeKind::Mul: v = *va * *vb; break;
      default:            v = *va / *vb; break;
    }
    if (std::isfinite(v)) return ExpressionTree::literal(v);
  }
  return ExpressionTree::binary(nd.kind, a, b);
}

inline void gather_operands(const ExpressionTree& tree, NodeKind op,
                            std::vector<ExpressionTree>& out);

inline ExpressionTree normalize_rec(const ExpressionTree& tree) {
  const Node& nd = tree.node(0);
  if (is_leaf(nd.kind)) return tree;
  const auto sizes = subtree_sizes(tree);
  if (nd.kind == NodeKind::Exp)
    return ExpressionTree::unary(NodeKind::Exp, normalize_rec(subtree(tree, 1, sizes)));
  const std::size_t li = 1;
  const std::size_t ri = li + static_cast<std::size_t>(sizes[li]);
  if (nd.kind == NodeKind::Sub || nd.kind == NodeKind::Div)
    return ExpressionTree::binary(nd.kind, normalize_rec(subtree(tree, li, sizes)),
                                  normalize_rec(subtree(tree, ri, sizes)));
  // Commutative chain: flatten, normalize operands, sort, rebuild left-assoc.
  std::vector<ExpressionTree> operands;
  gather_operands(tree, nd.kind, operands);
  for (auto& o : operands) o = normalize_rec(o);
  std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> keys;
  keys.reserve(operands.size());
  for (std::size_t k = 0; k < operands.size(); ++k)
    keys.push_back({{serialize_masked(operands[k]), serialize(operands[k])}, k});
  std::sort(keys.begin(), keys.end());
  ExpressionTree acc = operands[keys[0].second];
  for (std::size_t k = 1; k < keys.size(); ++k)
    acc = ExpressionTree::binary(nd.kind, acc, operands[keys[k].second]);
  return acc;
}

inline void gather_operands(const ExpressionTree& tree, NodeKind op,
                            std::vector<ExpressionTree>& out) {
  const Node& nd = tree.node(0);
  if (nd.kind != op) {
    out.push_back(tree);
    return;
  }
  const auto sizes = subtree_sizes(tree);
  const std::size_t li = 1;
  const std::size_t ri = li + static_cast<std::size_t>(sizes[li]);
  gather_operands(subtree(tree, li, sizes), op, out);
  gather_operands(subtree(tree, ri, sizes), op, out);
}

}  // namespace detail

/// Folds literal-only subtrees and orders commutative chains into a fixed
/// canonical arrangement. Parameter slots keep their indices, so the result
/// evaluates identically under the same theta. No algebraic simplification
/// beyond constant folding is attempted.
inline ExpressionTree canonical(const ExpressionTree& tree) {
  if (tree.empty()) throw StructuralError("canonical: empty tree");
  ExpressionTree folded = detail::fold_constants_rec(tree, 0, subtree_sizes(tree));
  return detail::normalize_rec(folded);
}

/// Structure signature invariant to constant relabeling, commutation and
/// re-association of +/*. Equal skeletons mean "the same model shape".
inline std::string skeleton(const ExpressionTree& tree,
                            std::span<const std::string> var_names = {}) {
  return serialize_masked(canonical(tree), var_names);
}

/// Renumbers parameter slots into first-occurrence order. Returns the new
/// tree and, for each new slot, the old slot it came from (for remapping a
/// parameter vector alongside).
inline std::pair<ExpressionTree, std::vector<int>> renumber_parameters(const ExpressionTree& tree) {
  std::vector<Node> nodes = tree.nodes();
  std::vector<int> old_of_new;
  std::vector<int> new_of_old(static_cast<std::size_t>(parameter_span(tree)), -1);
  for (auto& nd : nodes) {
    if (nd.kind != NodeKind::Parameter) continue;
    int& mapped = new_of_old[static_cast<std::size_t>(nd.index)];
    if (mapped < 0) {
      mapped = static_cast<int>(old_of_new.size());
      old_of_new.push_back(nd.index);
    }
    nd.index = mapped;
  }
  return {ExpressionTree(std::move(nodes)), std::move(old_of_new)};
}

/// Replaces every numeric literal with a fresh parameter slot and renumbers
/// all slots into first-occurrence order, so every constant in the model is
/// tunable during refinement. Returns the promoted tree and the matching
/// initial parameter vector (old theta entries for surviving slots, literal
/// values for promoted ones).
inline std::pair<ExpressionTree, std::vector<double>> promote_literals(
    const ExpressionTree& tree, std::span<const double> theta = {}) {
  std::vector<Node> nodes = tree.nodes();
  std::vector<double> theta0;
  std::vector<int> new_of_old(static_cast<std::size_t>(parameter_span(tree)), -1);
  for (auto& nd : nodes) {
    if (nd.kind == NodeKind::Literal) {
      nd.kind = NodeKind::Parameter;
      nd.index = static_cast<int>(theta0.size());
      theta0.push_back(nd.value);
      nd.value = 0.0;
    } else if (nd.kind == NodeKind::Parameter) {
      int& mapped = new_of_old[static_cast<std::size_t>(nd.index)];
      if (mapped < 0) {
        if (static_cast<std::size_t>(nd.index) >= theta.size())
          throw StructuralError("promote_literals: theta shorter than referenced slots");
        mapped = static_cast<int>(theta0.size());
        theta0.push_back(theta[static_cast<std::size_t>(nd.index)]);
      }
      nd.index = mapped;
    }
  }
  return {ExpressionTree(std::move(nodes)), std::move(theta0)};
}

}  // namespace kindisc

#endif  // KINDISC_EXPRESSION_HPP
