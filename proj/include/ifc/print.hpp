#pragma once

#include <string>

#include "ifc/ast.hpp"

namespace ifc::dsl {

namespace detail {

inline void print_term(const Term& t, const Lattice& lat, std::string& out) {
  auto kid = [&](std::size_t i) { print_term(*t.kids[i], lat, out); };
  switch (t.kind) {
    case TermKind::IntLit:
      out += std::to_string(t.int_val);
      return;
    case TermKind::BoolLit:
      out += t.bool_val ? "true" : "false";
      return;
    case TermKind::UnitLit:
      out += "unit";
      return;
    case TermKind::LabelLit:
      out += lat.show(*t.label_val);
      return;
    case TermKind::Var:
      out += t.name;
      return;
    case TermKind::Let:
      out += "(let " + t.name + " ";
      kid(0);
      out += ' ';
      kid(1);
      out += ')';
      return;
    case TermKind::If:
      out += "(if ";
      kid(0);
      out += ' ';
      kid(1);
      out += ' ';
      kid(2);
      out += ')';
      return;
    case TermKind::Prim:
      out += '(';
      out += to_string(t.op);
      for (std::size_t i = 0; i < t.kids.size(); ++i) {
        out += ' ';
        kid(i);
      }
      out += ')';
      return;
    case TermKind::CanFlow:
    case TermKind::Join:
      out += t.kind == TermKind::CanFlow ? "(canflow " : "(join ";
      kid(0);
      out += ' ';
      kid(1);
      out += ')';
      return;
    case TermKind::LabelOp:
      out += t.checked ? "(label " : "(label! ";
      kid(0);
      out += ' ';
      kid(1);
      out += " @" + std::to_string(t.site) + ")";
      return;
    case TermKind::Unlabel:
      out += "(unlabel ";
      kid(0);
      out += ')';
      return;
    case TermKind::ToLabeled:
    case TermKind::Call:
      out += t.kind == TermKind::Call ? "(call " : "(tolabeled ";
      out += t.name;
      for (std::size_t i = 0; i < t.kids.size(); ++i) {
        out += ' ';
        kid(i);
      }
      out += ')';
      return;
    case TermKind::GetCurrent:
      out += "(getcurrent)";
      return;
    case TermKind::Nil:
      out += "(nil " + t.ann->str() + ")";
      return;
    case TermKind::Cons:
      out += "(cons ";
      kid(0);
      out += ' ';
      kid(1);
      out += ')';
      return;
    case TermKind::MatchList:
      out += "(matchlist ";
      kid(0);
      out += ' ';
      kid(1);
      out += " (" + t.name + " " + t.name2 + " ";
      kid(2);
      out += "))";
      return;
    case TermKind::MkPair:
      out += "(pair ";
      kid(0);
      out += ' ';
      kid(1);
      out += ')';
      return;
    case TermKind::Fst:
    case TermKind::Snd:
      out += t.kind == TermKind::Fst ? "(fst " : "(snd ";
      kid(0);
      out += ')';
      return;
    case TermKind::EraseLabeled:
      out += "(eraselabeled ";
      kid(0);
      out += ' ';
      kid(1);
      out += ')';
      return;
    case TermKind::SetCurrentTcb:
      out += "(setcurrent! ";
      kid(0);
      out += ')';
      return;
  }
}

inline void print_pre_side(PreAtom::Side side, const std::string& name,
                           const std::optional<Label>& lit, const Lattice& lat,
                           std::string& out) {
  switch (side) {
    case PreAtom::Side::Cur:
      out += "cur";
      return;
    case PreAtom::Side::Param:
      out += name;
      return;
    case PreAtom::Side::Lit:
      out += lat.show(*lit);
      return;
  }
}

}  // namespace detail

/// Canonical textual form: parse(pretty_print(p)) reproduces p, site ids
/// included (every label site prints its @id).
inline std::string pretty_print(const Program& p) {
  std::string out;
  const Lattice& lat = *p.lattice;
  for (const auto& fn : p.functions) {
    out += "(def " + fn.name + " (";
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
      if (i) out += ' ';
      out += "(" + fn.params[i].name + " " + fn.params[i].type.str() + ")";
    }
    out += ")\n";
    if (!fn.pre.empty()) {
      out += "  :pre ";
      if (fn.pre.size() > 1) out += "(and ";
      for (std::size_t i = 0; i < fn.pre.size(); ++i) {
        if (i) out += ' ';
        out += "(canflow ";
        detail::print_pre_side(fn.pre[i].lhs, fn.pre[i].lhs_name, fn.pre[i].lhs_lit, lat, out);
        out += ' ';
        detail::print_pre_side(fn.pre[i].rhs, fn.pre[i].rhs_name, fn.pre[i].rhs_lit, lat, out);
        out += ')';
      }
      if (fn.pre.size() > 1) out += ')';
      out += '\n';
    }
    out += "  ";
    detail::print_term(*fn.body, lat, out);
    out += ")\n\n";
  }
  return out;
}

inline std::string print_term(const Term& t, const Lattice& lat) {
  std::string out;
  detail::print_term(t, lat, out);
  return out;
}

/// FNV-1a over the canonical text. Stable across pretty-print round trips,
/// which is what certificates key on.
inline std::uint64_t program_hash(const Program& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : pretty_print(p)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// The hash a certificate for this program must carry. Residual programs
/// answer with the hash of the program they were derived from.
inline std::uint64_t certificate_hash(const Program& p) {
  return p.cert_hash_override ? *p.cert_hash_override : program_hash(p);
}

}  // namespace ifc::dsl
