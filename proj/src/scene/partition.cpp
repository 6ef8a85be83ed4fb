#include "lopmap/scene/partition.hpp"

#include <algorithm>

#include "lopmap/error.hpp"

namespace lopmap::scene {

RegionPartition::RegionPartition(std::vector<HalfPlane> rules,
                                 std::vector<DecisionEntry> table, FloorBounds bounds)
    : rules_(std::move(rules)), table_(std::move(table)), bounds_(bounds) {
  if (table_.empty()) {
    throw Error(ErrorCode::InvalidConfig, "partition needs at least one region");
  }
  if (!(bounds_.xmax > bounds_.xmin) || !(bounds_.ymax > bounds_.ymin)) {
    throw Error(ErrorCode::InvalidBounds, "partition bounds are degenerate");
  }
  for (const auto& e : table_) {
    if (e.pattern.size() != rules_.size() ||
        e.pattern.find_first_not_of("+-*") != std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "bad decision pattern '" + e.pattern + "'");
    }
    if (e.label.empty()) throw Error(ErrorCode::InvalidLabel, "empty region label");
    if (std::find(regions_.begin(), regions_.end(), e.label) == regions_.end()) {
      regions_.push_back(e.label);
    }
  }
}

RegionPartition RegionPartition::single(std::string label, FloorBounds bounds) {
  return RegionPartition({}, {{"", std::move(label)}}, bounds);
}

const DecisionEntry& RegionPartition::match(double x, double y) const {
  if (!bounds_.contains(x, y)) {
    throw Error(ErrorCode::OutOfBounds, "point outside the partition bounds");
  }
  std::string signs(rules_.size(), '+');
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (!rules_[i].holds(x, y)) signs[i] = '-';
  }
  for (const auto& e : table_) {
    bool ok = true;
    for (std::size_t i = 0; i < signs.size() && ok; ++i) {
      ok = e.pattern[i] == '*' || e.pattern[i] == signs[i];
    }
    if (ok) return e;
  }
  throw Error(ErrorCode::OutOfBounds, "no partition rule covers the point");
}

const std::string& RegionPartition::region_of(double x, double y) const {
  return match(x, y).label;
}

std::size_t RegionPartition::region_index(double x, double y) const {
  const auto& label = match(x, y).label;
  return static_cast<std::size_t>(
      std::find(regions_.begin(), regions_.end(), label) - regions_.begin());
}

nlohmann::json RegionPartition::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : rules_) rules.push_back({r.a, r.b, r.c});
  nlohmann::json table = nlohmann::json::array();
  for (const auto& e : table_) table.push_back({{"pattern", e.pattern}, {"label", e.label}});
  return {{"rules", rules},
          {"table", table},
          {"bounds", {bounds_.xmin, bounds_.xmax, bounds_.ymin, bounds_.ymax}}};
}

RegionPartition RegionPartition::from_json(const nlohmann::json& j) {
  try {
    std::vector<HalfPlane> rules;
    for (const auto& r : j.at("rules")) {
      rules.push_back({r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()});
    }
    std::vector<DecisionEntry> table;
    for (const auto& e : j.at("table")) {
      table.push_back({e.at("pattern").get<std::string>(), e.at("label").get<std::string>()});
    }
    const auto& b = j.at("bounds");
    return RegionPartition(std::move(rules), std::move(table),
                           {b.at(0).get<double>(), b.at(1).get<double>(),
                            b.at(2).get<double>(), b.at(3).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("partition: ") + e.what());
  }
}

}  // namespace lopmap::scene
