#include "lopmap/cli/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lopmap/error.hpp"

namespace lopmap::cli {
namespace {

namespace pt = boost::property_tree;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

template <typename T>
T parse_value(const std::string& s, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    bad(where + ": expected true or false, got '" + s + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else {
    T v{};
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (s.empty() || r.ec != std::errc() || r.ptr != end) bad(where + ": cannot parse '" + s + "'");
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    return std::string(buf, r.ptr);
  }
}

struct Entry {
  KeyDoc doc;
  bool is_path = false;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Entry entry(const char* section, const char* key, const char* doc, Access access, bool is_path = false) {
  Entry e;
  e.doc = {section, key, doc};
  e.is_path = is_path;
  const std::string where = std::string("[") + section + "] " + key;
  e.set = [access, where](RunConfig& c, const std::string& s) { access(c) = parse_value<T>(s, where); };
  e.get = [access](const RunConfig& c) { return format_value<T>(access(const_cast<RunConfig&>(c))); };
  return e;
}

#define LOPMAP_KEY(T, sec, key, member, doc) \
  entry<T>(sec, key, doc, [](RunConfig& c) -> T& { return c.member; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      LOPMAP_KEY(int, "scene", "rooms", scene.rooms, "number of rooms"),
      LOPMAP_KEY(int, "scene", "objects", scene.objects, "number of objects, paired ones included"),
      LOPMAP_KEY(int, "scene", "paired_classes", scene.paired_classes,
                 "classes placed once in each of two rooms"),
      LOPMAP_KEY(std::uint64_t, "scene", "seed", scene.seed, "layout seed"),
      LOPMAP_KEY(double, "scene", "room_size", scene.room_size, "nominal room side, m"),
      LOPMAP_KEY(double, "scene", "wall_height", scene.wall_height, "m"),
      LOPMAP_KEY(double, "scene", "wall_thickness", scene.wall_thickness, "m"),
      LOPMAP_KEY(double, "scene", "door_width", scene.door_width, "m"),
      LOPMAP_KEY(int, "scene", "image_width", scene.image_width, "pixels"),
      LOPMAP_KEY(int, "scene", "image_height", scene.image_height, "pixels"),
      LOPMAP_KEY(double, "scene", "horizontal_fov_deg", scene.horizontal_fov_deg, "degrees"),
      LOPMAP_KEY(int, "scene", "positions_per_room", scene.positions_per_room, "camera stops per room"),
      LOPMAP_KEY(int, "scene", "views_per_position", scene.views_per_position, "headings per stop"),
      LOPMAP_KEY(double, "scene", "camera_height", scene.camera_height, "m"),
      LOPMAP_KEY(double, "scene", "camera_pitch_deg", scene.camera_pitch_deg, "downward tilt, degrees"),

      LOPMAP_KEY(std::string, "provider", "kind", provider, "synthetic | table"),
      LOPMAP_KEY(std::uint64_t, "provider", "seed", provider_seed, "synthetic provider seed"),
      LOPMAP_KEY(std::size_t, "provider", "vl_dim", vl_dim, "synthetic vision-language dims"),
      LOPMAP_KEY(std::size_t, "provider", "sem_dim", sem_dim, "synthetic semantic dims"),
      entry<std::string>("provider", "table", "embedding table JSON for kind=table",
                         [](RunConfig& c) -> std::string& { return c.provider_table; }, true),

      LOPMAP_KEY(float, "fusion", "voxel_size", fusion.voxel_size, "merge cell, m"),
      LOPMAP_KEY(std::size_t, "fusion", "max_pixels_per_frame", fusion.max_pixels_per_frame,
                 "pixel sample cap per frame"),
      LOPMAP_KEY(bool, "fusion", "context_prompt", fusion.context_prompt,
                 "object targets read '<object> in the <region>'"),
      LOPMAP_KEY(bool, "fusion", "encode_background", fusion.encode_background,
                 "background pixels carry region targets"),
      LOPMAP_KEY(std::uint64_t, "fusion", "seed", fusion.seed, "pixel sampling seed"),
      LOPMAP_KEY(int, "fusion", "holdout_every", holdout_every,
                 "every k-th frame is held out for evaluation; 0 keeps all"),

      LOPMAP_KEY(int, "hashgrid", "levels", grid.levels, "L"),
      LOPMAP_KEY(int, "hashgrid", "features", grid.features, "F per level"),
      LOPMAP_KEY(int, "hashgrid", "log2_table_size", grid.log2_table_size, "T, rows = 2^T"),
      LOPMAP_KEY(int, "hashgrid", "base_resolution", grid.base_resolution, "coarsest cells"),
      LOPMAP_KEY(int, "hashgrid", "finest_resolution", grid.finest_resolution, "finest cells"),
      LOPMAP_KEY(double, "hashgrid", "margin", grid_margin, "padding around the cloud bounds, m"),

      LOPMAP_KEY(std::size_t, "train", "batch_size", train.batch_size, "points per step"),
      LOPMAP_KEY(int, "train", "epochs", train.epochs, ""),
      LOPMAP_KEY(std::size_t, "train", "samples_per_epoch", train.samples_per_epoch, ""),
      LOPMAP_KEY(double, "train", "learning_rate", train.learning_rate, "Adam step size"),
      LOPMAP_KEY(double, "train", "lr_decay", train.lr_decay, "per-epoch multiplicative decay"),
      LOPMAP_KEY(double, "train", "beta1", train.beta1, ""),
      LOPMAP_KEY(double, "train", "beta2", train.beta2, ""),
      LOPMAP_KEY(double, "train", "epsilon", train.epsilon, ""),
      LOPMAP_KEY(int, "train", "hidden", train.hidden, "trunk width"),
      LOPMAP_KEY(std::uint64_t, "train", "seed", train.seed, "init and sampling seed"),

      LOPMAP_KEY(double, "loss", "log_tau_init", loss.log_tau_init, "initial log temperature"),
      LOPMAP_KEY(double, "loss", "tau_min", loss.tau_min, ""),
      LOPMAP_KEY(double, "loss", "tau_max", loss.tau_max, ""),
      LOPMAP_KEY(bool, "loss", "learn_tau", loss.learn_tau, ""),
      LOPMAP_KEY(double, "loss", "weight_v", loss.weight_v, "vision-language branch weight"),
      LOPMAP_KEY(double, "loss", "weight_s", loss.weight_s, "semantic branch weight"),
      LOPMAP_KEY(bool, "loss", "use_point_weights", loss.use_point_weights,
                 "weight rows by distance and confidence"),

      LOPMAP_KEY(double, "query", "vs_weight", vs_weight, "w in w*cos_v + (1-w)*cos_s"),
      LOPMAP_KEY(std::size_t, "query", "top_k", top_k, "samples in the predicted point set"),
      LOPMAP_KEY(double, "query", "sample_step", sample_step, "grid step when no cloud is given, m"),

      LOPMAP_KEY(double, "mapper", "grid_step", mapper.grid_step, "region sampling cell, m"),
      LOPMAP_KEY(double, "mapper", "conf_threshold", mapper.conf_threshold, "detections must exceed this"),
      LOPMAP_KEY(int, "mapper", "min_observations", mapper.min_observations, "frames per object"),
      LOPMAP_KEY(bool, "mapper", "strict_observations", mapper.strict_observations,
                 "require more than min_observations frames"),
      LOPMAP_KEY(int, "mapper", "edge_refresh_interval", mapper.edge_refresh_interval,
                 "frames between edge rebuilds in update-map"),
      LOPMAP_KEY(int, "mapper", "update_pixel_stride", mapper.update_pixel_stride,
                 "pixel stride for region growth"),
      LOPMAP_KEY(double, "mapper", "sample_height", mapper.sample_height,
                 "region sampling plane, fraction of scene height"),
      LOPMAP_KEY(std::string, "mapper", "describer", mapper.describer, "rule | external"),
      entry<std::string>("mapper", "implausible_pairs", "class,region veto file",
                         [](RunConfig& c) -> std::string& { return c.implausible_pairs; }, true),

      LOPMAP_KEY(double, "planner", "step", planner_step, "waypoint spacing, m"),

      LOPMAP_KEY(std::size_t, "eval", "points", eval_points, "held-out points scored by eval-region"),
  };
  return table;
}

#undef LOPMAP_KEY

}  // namespace

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> d;
    for (const auto& e : entries()) d.push_back(e.doc);
    return d;
  }();
  return docs;
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    bad(std::string("config: ") + e.what());
  }
  std::map<std::pair<std::string, std::string>, const Entry*> lookup;
  for (const auto& e : entries()) lookup[{e.doc.section, e.doc.key}] = &e;

  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) bad("key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const auto it = lookup.find({section, key});
      if (it == lookup.end()) bad("unknown key [" + section + "] " + key);
      std::string s = value.get_value<std::string>();
      if (it->second->is_path && !s.empty() && std::filesystem::path(s).is_relative() && !base.empty()) {
        s = (base / s).lexically_normal().string();
      }
      it->second->set(c, s);
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const auto& e : entries()) {
    if (e.doc.section != section) {
      if (!section.empty()) out << '\n';
      section = e.doc.section;
      out << '[' << section << "]\n";
    }
    out << e.doc.key << " = " << e.get(*this) << '\n';
  }
  return out.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_ini();
}

void RunConfig::validate() const {
  if (provider != "synthetic" && provider != "table") bad("[provider] kind must be synthetic or table");
  if (provider == "table" && provider_table.empty()) bad("[provider] table is required for kind=table");
  if (provider == "synthetic" && (vl_dim < 8 || sem_dim < 8)) bad("[provider] dims must be >= 8");
  if (scene.rooms < 1) bad("[scene] rooms must be >= 1");
  if (scene.objects < 0 || scene.paired_classes < 0) bad("[scene] counts must be >= 0");
  if (!(fusion.voxel_size > 0.0f)) bad("[fusion] voxel_size must be > 0");
  if (holdout_every < 0 || holdout_every == 1) bad("[fusion] holdout_every must be 0 or >= 2");
  if (!(grid_margin >= 0.0)) bad("[hashgrid] margin must be >= 0");
  hashgrid::HashGridConfig g = grid;
  g.bounds = Aabb(Vec3::Zero(), Vec3::Ones());
  g.validate();
  train.validate();
  if (!(loss.tau_min > 0.0 && loss.tau_min <= loss.tau_max)) bad("[loss] need 0 < tau_min <= tau_max");
  if (!(vs_weight >= 0.0 && vs_weight <= 1.0)) bad("[query] vs_weight must be in [0, 1]");
  if (top_k < 1) bad("[query] top_k must be >= 1");
  if (!(sample_step > 0.0)) bad("[query] sample_step must be > 0");
  mapper.validate();
  if (!(planner_step > 0.0)) bad("[planner] step must be > 0");
  if (eval_points < 1) bad("[eval] points must be >= 1");
}

}  // namespace lopmap::cli
