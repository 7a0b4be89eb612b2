#include "spn/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "spn/error.hpp"

namespace spn {
namespace {

using nlohmann::json;

template <class T>
json table_to_json(const Table<T>& t) {
  return t.to_rows();
}

template <class T>
Table<T> table_from_json(const json& doc, const char* key, int rows, int cols) {
  if (!doc.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  const auto& v = doc.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != rows) {
    throw FormatError(std::string("field '") + key + "' must have " + std::to_string(rows) + " rows");
  }
  Table<T> out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (!v[r].is_array() || static_cast<int>(v[r].size()) != cols) {
      throw FormatError(std::string("field '") + key + "' row " + std::to_string(r) + " must have " +
                        std::to_string(cols) + " entries");
    }
    for (int c = 0; c < cols; ++c) out(r, c) = v[r][c].get<T>();
  }
  return out;
}

template <class T>
std::vector<T> vector_from_json(const json& doc, const char* key, int size) {
  if (!doc.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  const auto& v = doc.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != size) {
    throw FormatError(std::string("field '") + key + "' must have " + std::to_string(size) + " entries");
  }
  return v.get<std::vector<T>>();
}

int int_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_number_integer()) {
    throw FormatError(std::string("missing integer field '") + key + "'");
  }
  return doc.at(key).get<int>();
}

}  // namespace

json instance_to_json(const Instance& inst) {
  const auto& c = inst.config;
  json doc;
  doc["schema"] = std::string(kNetworkSchema);
  doc["num_classes"] = c.num_classes;
  doc["num_types"] = c.num_types;
  doc["num_servers"] = c.num_servers;
  doc["tau_max"] = c.tau_max;
  doc["material"] = table_to_json(c.material);
  doc["routing"] = table_to_json(c.routing);
  doc["compatibility"] = table_to_json(c.compatibility);
  doc["completion"] = table_to_json(c.completion);
  doc["arrivals"] = c.arrivals;
  doc["service_reward"] = c.service_reward;
  doc["holding_weight"] = c.holding_weight;
  doc["holding_mode"] = c.holding_mode == HoldingMode::kWaitingOnly ? "waiting-only" : "all-items";
  doc["item_cap"] = c.item_cap;
  doc["initial_idle"] = c.initial_idle;
  json extra = json::array();
  for (const auto& e : inst.extra) {
    extra.push_back({{"name", e.name},
                     {"schedule_coeff", table_to_json(e.schedule_coeff)},
                     {"service_coeff", table_to_json(e.service_coeff)},
                     {"bound", e.bound}});
  }
  doc["extra_constraints"] = extra;
  return doc;
}

Instance instance_from_json(const json& doc) {
  if (!doc.is_object()) throw FormatError("network document must be an object");
  if (!doc.contains("schema") || !doc.at("schema").is_string()) throw FormatError("missing field 'schema'");
  if (doc.at("schema").get<std::string>() != kNetworkSchema) {
    throw FormatError("unsupported schema '" + doc.at("schema").get<std::string>() + "', expected '" +
                      std::string(kNetworkSchema) + "'");
  }
  try {
    Instance inst;
    auto& c = inst.config;
    c.num_classes = int_field(doc, "num_classes");
    c.num_types = int_field(doc, "num_types");
    c.num_servers = int_field(doc, "num_servers");
    c.tau_max = int_field(doc, "tau_max");
    if (c.num_classes < 0 || c.num_types < 0 || c.tau_max < 0) throw FormatError("negative dimension");
    const int I = c.num_classes, J = c.num_types;
    c.material = table_from_json<int>(doc, "material", I, J);
    c.routing = table_from_json<int>(doc, "routing", I, J);
    c.compatibility = table_from_json<int>(doc, "compatibility", J, J);
    c.completion = table_from_json<double>(doc, "completion", J, c.tau_max + 1);
    if (!doc.contains("arrivals") || !doc.at("arrivals").is_array() || static_cast<int>(doc.at("arrivals").size()) != I) {
      throw FormatError("field 'arrivals' must list one distribution per class");
    }
    c.arrivals = doc.at("arrivals").get<std::vector<std::vector<double>>>();
    c.service_reward = vector_from_json<double>(doc, "service_reward", J);
    c.holding_weight = vector_from_json<double>(doc, "holding_weight", I);
    const std::string mode = doc.value("holding_mode", std::string("waiting-only"));
    if (mode == "waiting-only") {
      c.holding_mode = HoldingMode::kWaitingOnly;
    } else if (mode == "all-items") {
      c.holding_mode = HoldingMode::kAllItems;
    } else {
      throw FormatError("holding_mode must be 'waiting-only' or 'all-items'");
    }
    c.item_cap = vector_from_json<int>(doc, "item_cap", I);
    c.initial_idle = vector_from_json<int>(doc, "initial_idle", J);
    if (doc.contains("extra_constraints")) {
      for (const auto& e : doc.at("extra_constraints")) {
        ExtraConstraint ec;
        ec.name = e.value("name", std::string());
        ec.schedule_coeff = table_from_json<int>(e, "schedule_coeff", J, J);
        ec.service_coeff = table_from_json<int>(e, "service_coeff", J, c.slots());
        ec.bound = int_field(e, "bound");
        inst.extra.push_back(std::move(ec));
      }
    }
    return inst;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network document: ") + e.what());
  }
}

std::string instance_to_text(const Instance& inst) { return instance_to_json(inst).dump(2) + "\n"; }

Instance instance_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("cannot parse network file: ") + e.what());
  }
  return instance_from_json(doc);
}

Instance load_instance(const std::string& path) { return instance_from_text(read_file(path)); }

void save_instance(const std::string& path, const Instance& inst) { write_file(path, instance_to_text(inst)); }

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const Instance& inst) { return fnv1a64(instance_to_json(inst).dump()); }

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string format_state(const SystemState& state) { return json(state.flatten()).dump(); }

SystemState parse_state(const NetworkConfig& cfg, const std::string& text) {
  std::vector<int> flat;
  try {
    flat = json::parse(text).get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("cannot parse state record: ") + e.what());
  }
  return SystemState::unflatten(cfg, flat);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace spn
