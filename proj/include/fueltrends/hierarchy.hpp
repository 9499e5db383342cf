#pragma once

#include <array>
#include <string>
#include <vector>

namespace fueltrends {

// Canonical fuel nodes, in survey CSV column order.
enum class Node : int {
  wood = 0,
  cropwaste,
  dung,
  charcoal,
  coal,
  biomass,
  solid,
  kerosene,
  gas,
  electricity,
  others,
};
constexpr int kNumNodes = 11;
constexpr int kNumConditionals = 8;

enum class Area : int { urban = 0, rural = 1, overall = 2 };
enum class Tier : int { top = 0, mid = 1, lower = 2 };
constexpr int kNumTiers = 3;

const char* node_name(Node n);
Node parse_node(const std::string& name);
const char* area_name(Area a);
Area parse_area(const std::string& name);

// Three nested compositions with fixed category order; the last category of
// each tier absorbs the remainder. mid splits solid, lower splits biomass.
struct FuelHierarchy {
  std::array<std::vector<Node>, kNumTiers> tiers;
  // conditional (stick) nodes in likelihood order: the non-final categories
  // of each tier, top to lower
  std::vector<Node> conditionals;

  static const FuelHierarchy& standard();

  Tier tier_of(Node n) const;
  // parent whose count is the tier's total; others (top) has none
  bool has_parent(Tier t) const { return t != Tier::top; }
  Node parent(Tier t) const;
  // index of n within conditionals, or -1 when n is a tier-final category
  int conditional_index(Node n) const;
  bool is_leaf(Node n) const { return n != Node::solid && n != Node::biomass; }
};

}  // namespace fueltrends
