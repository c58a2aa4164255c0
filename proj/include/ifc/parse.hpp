#pragma once

#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "ifc/ast.hpp"

namespace ifc::dsl {

struct ParseError : UsageError {
  int line, col;
  ParseError(const std::string& what, int line, int col)
      : UsageError(std::to_string(line) + ":" + std::to_string(col) + ": " + what),
        line(line),
        col(col) {}
};

namespace detail {

struct Token {
  enum class Kind { LParen, RParen, Atom, End };
  Kind kind;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ';') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ >= src_.size()) {
      tok_ = {Token::Kind::End, "", line_, col_};
      return;
    }
    int line = line_, col = col_;
    char c = src_[pos_];
    if (c == '(' || c == ')') {
      ++pos_;
      ++col_;
      tok_ = {c == '(' ? Token::Kind::LParen : Token::Kind::RParen, std::string(1, c), line, col};
      return;
    }
    std::size_t start = pos_;
    if (c == '{') {
      // a braced label literal is one atom, commas and all
      while (pos_ < src_.size() && src_[pos_] != '}') consume_char();
      if (pos_ >= src_.size()) throw ParseError("unterminated '{'", line, col);
      consume_char();
    } else {
      while (pos_ < src_.size() && !std::isspace(static_cast<unsigned char>(src_[pos_])) &&
             src_[pos_] != '(' && src_[pos_] != ')' && src_[pos_] != ';')
        consume_char();
    }
    tok_ = {Token::Kind::Atom, std::string(src_.substr(start, pos_ - start)), line, col};
  }

  void consume_char() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

class Parser {
 public:
  Parser(std::string_view src, LatticePtr lattice) : lex_(src), lattice_(std::move(lattice)) {}

  Program program() {
    Program p;
    p.lattice = lattice_;
    while (lex_.peek().kind != Token::Kind::End) p.functions.push_back(defn());
    if (p.functions.empty()) throw ParseError("expected at least one (def ...)", 1, 1);
    return finalize(std::move(p));
  }

 private:
  [[noreturn]] void fail(const std::string& what, const Token& at) {
    throw ParseError(what, at.line, at.col);
  }

  Token expect(Token::Kind k, const char* what) {
    Token t = lex_.next();
    if (t.kind != k) fail(std::string("expected ") + what, t);
    return t;
  }

  std::string atom(const char* what) { return expect(Token::Kind::Atom, what).text; }

  FunctionDef defn() {
    expect(Token::Kind::LParen, "'('");
    Token head = lex_.next();
    if (head.kind != Token::Kind::Atom || head.text != "def") fail("expected 'def'", head);
    FunctionDef fn;
    fn.name = atom("function name");

    expect(Token::Kind::LParen, "'(' opening the parameter list");
    while (lex_.peek().kind == Token::Kind::LParen) {
      lex_.next();
      Param param;
      param.name = atom("parameter name");
      param.type = type();
      expect(Token::Kind::RParen, "')' closing the parameter");
      fn.params.push_back(std::move(param));
    }
    expect(Token::Kind::RParen, "')' closing the parameter list");

    if (lex_.peek().kind == Token::Kind::Atom && lex_.peek().text == ":pre") {
      lex_.next();
      fn.pre = pre_prop(fn);
    }

    scope_.clear();
    for (const auto& p : fn.params) scope_.push_back(p.name);
    fn.body = term();
    expect(Token::Kind::RParen, "')' closing the definition");
    return fn;
  }

  TypeExpr type() {
    Token t = lex_.next();
    if (t.kind == Token::Kind::Atom) {
      if (t.text == "Int") return TypeExpr::intt();
      if (t.text == "Bool") return TypeExpr::boolean();
      if (t.text == "Unit") return TypeExpr::unit();
      if (t.text == "Label") return TypeExpr::label();
      fail("unknown type '" + t.text + "'", t);
    }
    if (t.kind != Token::Kind::LParen) fail("expected a type", t);
    Token head = lex_.next();
    if (head.kind != Token::Kind::Atom) fail("expected a type constructor", head);
    TypeExpr out;
    if (head.text == "Labeled") {
      TypeExpr inner = type();
      if (inner.kind == TypeKind::Labeled)
        fail("Labeled may not directly wrap Labeled", head);
      out = TypeExpr::labeled(std::move(inner));
    } else if (head.text == "List") {
      out = TypeExpr::list(type());
    } else if (head.text == "Pair") {
      TypeExpr a = type();
      TypeExpr b = type();
      out = TypeExpr::pair(std::move(a), std::move(b));
    } else {
      fail("unknown type constructor '" + head.text + "'", head);
    }
    expect(Token::Kind::RParen, "')' closing the type");
    return out;
  }

  std::vector<PreAtom> pre_prop(const FunctionDef& fn) {
    expect(Token::Kind::LParen, "'(' opening the precondition");
    Token head = lex_.next();
    if (head.kind != Token::Kind::Atom) fail("expected 'canflow' or 'and'", head);
    std::vector<PreAtom> atoms;
    if (head.text == "and") {
      while (lex_.peek().kind == Token::Kind::LParen) {
        lex_.next();
        Token inner = lex_.next();
        if (inner.kind != Token::Kind::Atom || inner.text != "canflow")
          fail("precondition conjuncts must be canflow atoms", inner);
        atoms.push_back(pre_atom(fn));
      }
      if (atoms.empty()) fail("empty precondition conjunction", head);
      expect(Token::Kind::RParen, "')' closing the precondition");
    } else if (head.text == "canflow") {
      atoms.push_back(pre_atom(fn));  // pre_atom consumes the closing ')'
    } else {
      fail("expected 'canflow' or 'and'", head);
    }
    return atoms;
  }

  PreAtom pre_atom(const FunctionDef& fn) {
    PreAtom atom;
    auto side = [&](PreAtom::Side& kind, std::string& name, std::optional<Label>& lit) {
      Token t = expect(Token::Kind::Atom, "a precondition side");
      if (t.text == "cur") {
        kind = PreAtom::Side::Cur;
        return;
      }
      for (const auto& p : fn.params) {
        if (p.name == t.text) {
          if (p.type != TypeExpr::label())
            fail("precondition side '" + t.text + "' is not a Label parameter", t);
          kind = PreAtom::Side::Param;
          name = t.text;
          return;
        }
      }
      if (auto l = lattice_->parse(t.text)) {
        kind = PreAtom::Side::Lit;
        lit = *l;
        return;
      }
      fail("precondition side '" + t.text + "' is neither cur, a Label parameter, nor a label",
           t);
    };
    side(atom.lhs, atom.lhs_name, atom.lhs_lit);
    side(atom.rhs, atom.rhs_name, atom.rhs_lit);
    expect(Token::Kind::RParen, "')' closing the canflow atom");
    return atom;
  }

  bool bound(const std::string& name) const {
    return std::find(scope_.begin(), scope_.end(), name) != scope_.end();
  }

  TermPtr term() {
    Token t = lex_.next();
    if (t.kind == Token::Kind::Atom) return atom_term(t);
    if (t.kind != Token::Kind::LParen) fail("expected a term", t);
    Token head = lex_.next();
    if (head.kind != Token::Kind::Atom) fail("expected a form head", head);
    TermPtr out = form(head);
    expect(Token::Kind::RParen, "')'");
    return out;
  }

  TermPtr atom_term(const Token& t) {
    const std::string& s = t.text;
    if (s == "true") return mk_bool(true);
    if (s == "false") return mk_bool(false);
    if (s == "unit") return mk_unit();
    if (!s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) ||
                       (s[0] == '-' && s.size() > 1 &&
                        std::isdigit(static_cast<unsigned char>(s[1]))))) {
      std::int64_t n = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
      if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad integer literal", t);
      return mk_int(n);
    }
    if (bound(s)) return mk_var(s);
    if (auto l = lattice_->parse(s)) return mk_label_lit(*l);
    fail("unbound variable '" + s + "'", t);
  }

  TermPtr form(const Token& head) {
    const std::string& h = head.text;
    if (h == "let") {
      std::string name = atom("binder name");
      TermPtr bound_term = term();
      scope_.push_back(name);
      TermPtr body = term();
      scope_.pop_back();
      return mk_let(std::move(name), std::move(bound_term), std::move(body));
    }
    if (h == "if") {
      TermPtr c = term(), a = term(), b = term();
      return mk_if(std::move(c), std::move(a), std::move(b));
    }
    for (PrimOp op : {PrimOp::Add, PrimOp::Sub, PrimOp::Mul, PrimOp::Eq, PrimOp::Lt, PrimOp::And,
                      PrimOp::Or, PrimOp::Not}) {
      if (h == to_string(op)) {
        std::vector<TermPtr> args;
        for (int i = 0; i < prim_arity(op); ++i) args.push_back(term());
        return mk_prim(op, std::move(args));
      }
    }
    if (h == "canflow" || h == "join") {
      TermPtr a = term(), b = term();
      return mk({.kind = h == "canflow" ? TermKind::CanFlow : TermKind::Join,
                 .kids = {std::move(a), std::move(b)}});
    }
    if (h == "label" || h == "label!") {
      TermPtr v = term(), l = term();
      int site = -1;
      if (lex_.peek().kind == Token::Kind::Atom && lex_.peek().text.starts_with("@")) {
        Token st = lex_.next();
        std::string digits = st.text.substr(1);
        std::int64_t n = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || n < 1)
          fail("bad site id", st);
        site = static_cast<int>(n);
      }
      return mk_label_op(std::move(v), std::move(l), site, h == "label");
    }
    if (h == "unlabel") return mk_unlabel(term());
    if (h == "tolabeled" || h == "call") {
      std::string fname = atom("function name");
      std::vector<TermPtr> args;
      while (lex_.peek().kind != Token::Kind::RParen) args.push_back(term());
      return h == "call" ? mk_call(std::move(fname), std::move(args))
                         : mk_to_labeled(std::move(fname), std::move(args));
    }
    if (h == "getcurrent") return mk({.kind = TermKind::GetCurrent});
    if (h == "nil") {
      TypeExpr elem = type();
      return mk({.kind = TermKind::Nil, .ann = std::move(elem)});
    }
    if (h == "cons") {
      TermPtr a = term(), b = term();
      return mk({.kind = TermKind::Cons, .kids = {std::move(a), std::move(b)}});
    }
    if (h == "matchlist") {
      TermPtr scrut = term();
      TermPtr nil_branch = term();
      expect(Token::Kind::LParen, "'(' opening the cons branch");
      std::string hd = atom("head binder");
      std::string tl = atom("tail binder");
      scope_.push_back(hd);
      scope_.push_back(tl);
      TermPtr cons_branch = term();
      scope_.pop_back();
      scope_.pop_back();
      expect(Token::Kind::RParen, "')' closing the cons branch");
      return mk({.kind = TermKind::MatchList,
                 .name = std::move(hd),
                 .name2 = std::move(tl),
                 .kids = {std::move(scrut), std::move(nil_branch), std::move(cons_branch)}});
    }
    if (h == "pair") {
      TermPtr a = term(), b = term();
      return mk({.kind = TermKind::MkPair, .kids = {std::move(a), std::move(b)}});
    }
    if (h == "fst" || h == "snd") {
      return mk({.kind = h == "fst" ? TermKind::Fst : TermKind::Snd, .kids = {term()}});
    }
    if (h == "eraselabeled") {
      TermPtr l = term(), v = term();
      return mk_erase_labeled(std::move(l), std::move(v));
    }
    if (h == "setcurrent!") {
      return mk({.kind = TermKind::SetCurrentTcb, .kids = {term()}});
    }
    fail("unknown form '" + h + "'", head);
  }

  Lexer lex_;
  LatticePtr lattice_;
  std::vector<std::string> scope_;
};

}  // namespace detail

/// Parses a source text into a Program over the given lattice. Site ids are
/// taken from explicit @n markers and otherwise auto-assigned pre-order.
inline Program parse(std::string_view source, LatticePtr lattice) {
  return detail::Parser(source, std::move(lattice)).program();
}

}  // namespace ifc::dsl
