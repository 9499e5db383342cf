#include "fueltrends/hierarchy.hpp"

#include <stdexcept>

namespace fueltrends {

namespace {
const char* kNodeNames[kNumNodes] = {"wood", "cropwaste", "dung",        "charcoal",
                                     "coal", "biomass",   "solid",       "kerosene",
                                     "gas",  "electricity", "others"};
}

const char* node_name(Node n) { return kNodeNames[static_cast<int>(n)]; }

Node parse_node(const std::string& name) {
  for (int i = 0; i < kNumNodes; ++i) {
    if (name == kNodeNames[i]) return static_cast<Node>(i);
  }
  throw std::domain_error("unknown fuel node: " + name);
}

const char* area_name(Area a) {
  switch (a) {
    case Area::urban: return "urban";
    case Area::rural: return "rural";
    case Area::overall: return "overall";
  }
  throw std::domain_error("bad area");
}

Area parse_area(const std::string& name) {
  if (name == "urban") return Area::urban;
  if (name == "rural") return Area::rural;
  if (name == "overall") return Area::overall;
  throw std::domain_error("unknown area: " + name);
}

const FuelHierarchy& FuelHierarchy::standard() {
  static const FuelHierarchy h = [] {
    FuelHierarchy f;
    f.tiers[0] = {Node::solid, Node::kerosene, Node::gas, Node::electricity, Node::others};
    f.tiers[1] = {Node::biomass, Node::charcoal, Node::coal};
    f.tiers[2] = {Node::wood, Node::cropwaste, Node::dung};
    for (int t = 0; t < kNumTiers; ++t) {
      for (size_t i = 0; i + 1 < f.tiers[t].size(); ++i) f.conditionals.push_back(f.tiers[t][i]);
    }
    return f;
  }();
  return h;
}

Tier FuelHierarchy::tier_of(Node n) const {
  for (int t = 0; t < kNumTiers; ++t) {
    for (Node m : tiers[t]) {
      if (m == n) return static_cast<Tier>(t);
    }
  }
  throw std::domain_error("node not in hierarchy");
}

Node FuelHierarchy::parent(Tier t) const {
  if (t == Tier::mid) return Node::solid;
  if (t == Tier::lower) return Node::biomass;
  throw std::domain_error("top tier has no parent node");
}

int FuelHierarchy::conditional_index(Node n) const {
  for (size_t i = 0; i < conditionals.size(); ++i) {
    if (conditionals[i] == n) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace fueltrends
