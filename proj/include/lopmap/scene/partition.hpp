#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace lopmap::scene {

/// Half-plane a*x + b*y <= c over the floor plan.
struct HalfPlane {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  bool holds(double x, double y) const { return a * x + b * y <= c; }
  bool operator==(const HalfPlane&) const = default;
};

/// One row of the decision table. `pattern` has one character per rule:
/// '+' rule must hold, '-' rule must not hold, '*' don't care.
struct DecisionEntry {
  std::string pattern;
  std::string label;
  bool operator==(const DecisionEntry&) const = default;
};

struct FloorBounds {
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  bool operator==(const FloorBounds&) const = default;
};

/// Line-rule partition of the floor plan into named regions. Entries are
/// evaluated in order; the first whose pattern matches wins.
class RegionPartition {
 public:
  RegionPartition() = default;
  RegionPartition(std::vector<HalfPlane> rules, std::vector<DecisionEntry> table,
                  FloorBounds bounds);

  /// Single-region partition covering `bounds`.
  static RegionPartition single(std::string label, FloorBounds bounds);

  const std::string& region_of(double x, double y) const;
  /// Index into regions() of the label region_of would return.
  std::size_t region_index(double x, double y) const;

  const std::vector<HalfPlane>& rules() const { return rules_; }
  const std::vector<DecisionEntry>& table() const { return table_; }
  const std::vector<std::string>& regions() const { return regions_; }
  const FloorBounds& bounds() const { return bounds_; }

  nlohmann::json to_json() const;
  static RegionPartition from_json(const nlohmann::json& j);

  bool operator==(const RegionPartition& o) const {
    return rules_ == o.rules_ && table_ == o.table_ && bounds_ == o.bounds_;
  }

 private:
  const DecisionEntry& match(double x, double y) const;

  std::vector<HalfPlane> rules_;
  std::vector<DecisionEntry> table_;
  std::vector<std::string> regions_;
  FloorBounds bounds_;
};

}  // namespace lopmap::scene
