#include "esource/dnc/eligibility.hpp"

#include "esource/error.hpp"

namespace esource::dnc {

namespace {

void collect(const Expr& e, std::vector<Atom>& out) {
  if (e.op == Expr::Op::Leaf) {
    out.push_back(e.atom);
    return;
  }
  for (const auto& x : e.operands) collect(x, out);
}

bool eval(const Expr& e, const std::vector<bool>& values, std::size_t& next) {
  switch (e.op) {
    case Expr::Op::Leaf:
      if (next >= values.size()) throw Error(Errc::InvalidArgument, "missing atom value");
      return values[next++];
    case Expr::Op::Not:
      if (e.operands.size() != 1) throw Error(Errc::InvalidArgument, "Not takes one operand");
      return !eval(e.operands[0], values, next);
    case Expr::Op::And: {
      // every operand is visited so atom positions stay aligned
      bool result = true;
      for (const auto& x : e.operands) result = eval(x, values, next) && result;
      return result;
    }
    case Expr::Op::Or: {
      bool result = false;
      for (const auto& x : e.operands) result = eval(x, values, next) || result;
      return result;
    }
  }
  return false;
}

}  // namespace

std::vector<Atom> atoms_of(const Expr& e) {
  std::vector<Atom> out;
  collect(e, out);
  return out;
}

bool evaluate(const Expr& e, const std::vector<bool>& atom_values) {
  std::size_t next = 0;
  return eval(e, atom_values, next);
}

std::string describe(const Atom& a) {
  switch (a.kind) {
    case Atom::Kind::HasDiagnosis: return "HasDiagnosis(" + a.label + ")";
    case Atom::Kind::HasActiveDrug: return "HasActiveDrug(" + a.label + ")";
    case Atom::Kind::AgeAtLeast: return "AgeAtLeast(" + std::to_string(a.years) + ")";
    case Atom::Kind::AgeBelow: return "AgeBelow(" + std::to_string(a.years) + ")";
  }
  return "?";
}

}  // namespace esource::dnc
