#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lopmap/embed/fusion.hpp"
#include "lopmap/field/field.hpp"
#include "lopmap/field/train.hpp"
#include "lopmap/hashgrid/hashgrid.hpp"
#include "lopmap/scene/synthetic.hpp"
#include "lopmap/topomap/topomap.hpp"

namespace lopmap::cli {

/// Everything that affects numerics, in one INI file with [section] key=value
/// lines. Anything left out keeps its default.
struct RunConfig {
  scene::SceneConfig scene;

  /// "synthetic" or "table".
  std::string provider = "synthetic";
  std::uint64_t provider_seed = 7;
  std::size_t vl_dim = 64;
  std::size_t sem_dim = 64;
  /// JSON table for the "table" provider.
  std::string provider_table;

  embed::FusionConfig fusion;
  /// Every k-th frame (k-1, 2k-1, ...) is held out of the cloud; 0 keeps all.
  int holdout_every = 5;

  /// Desk scale: 2^16 rows per level. Bounds come from the cloud.
  hashgrid::HashGridConfig grid{.log2_table_size = 16};
  double grid_margin = 0.25;
  field::TrainConfig train;
  field::LossConfig loss;

  double vs_weight = 0.5;
  std::size_t top_k = 50;
  double sample_step = 0.25;

  /// Regions are read just above the floor, where the cloud has points.
  topomap::MapperConfig mapper{.sample_height = 0.05};
  /// "class,region" veto file; empty disables the veto.
  std::string implausible_pairs;

  double planner_step = 0.25;

  std::size_t eval_points = 1000;

  /// Throws InvalidConfig on unknown sections or keys and on bad values;
  /// IoError when the file cannot be read. Relative paths inside the file
  /// resolve against its directory.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text, const std::filesystem::path& base = {});

  /// Every key, including defaults. Parsing the output gives back *this.
  std::string to_ini() const;
  void save(const std::filesystem::path& path) const;

  /// Runs each sub-config's validation. Throws InvalidConfig / BatchTooSmall.
  void validate() const;

  /// Compares the resolved key=value text.
  bool operator==(const RunConfig& o) const { return to_ini() == o.to_ini(); }
};

struct KeyDoc {
  std::string section;
  std::string key;
  std::string doc;
};
/// One entry per accepted key, in file order.
const std::vector<KeyDoc>& config_keys();

}  // namespace lopmap::cli
