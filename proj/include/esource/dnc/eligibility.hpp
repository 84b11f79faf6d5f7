#pragma once

#include <string>
#include <vector>

namespace esource::dnc {

struct Atom {
  enum class Kind { HasDiagnosis, HasActiveDrug, AgeAtLeast, AgeBelow };
  Kind kind = Kind::HasDiagnosis;
  std::string label;  // terminology-map label for the Has* atoms
  int years = 0;        // for the Age* atoms
  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Boolean expression over atoms.
struct Expr {
  enum class Op { Leaf, And, Or, Not };
  Op op = Op::Leaf;
  Atom atom;
  std::vector<Expr> operands;

  static Expr leaf(Atom a) { return Expr{Op::Leaf, std::move(a), {}}; }
  static Expr all_of(std::vector<Expr> xs) { return Expr{Op::And, {}, std::move(xs)}; }
  static Expr any_of(std::vector<Expr> xs) { return Expr{Op::Or, {}, std::move(xs)}; }
  static Expr negate(Expr x) { return Expr{Op::Not, {}, {std::move(x)}}; }
  friend bool operator==(const Expr&, const Expr&) = default;
};

struct EligibilityCriterion {
  std::string criterion_id;
  Expr expression;
  friend bool operator==(const EligibilityCriterion&, const EligibilityCriterion&) = default;
};

/// Every leaf atom, depth first.
std::vector<Atom> atoms_of(const Expr& e);

/// Evaluates the tree given a truth value per leaf, in atoms_of order.
bool evaluate(const Expr& e, const std::vector<bool>& atom_values);

std::string describe(const Atom& a);

}  // namespace esource::dnc
