#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rvp::cli {

// Exit statuses of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitSchema = 2;     // unreadable, malformed or schema-violating config
inline constexpr int kExitNumerical = 3;  // a module raised rvp::Error

const std::vector<std::string>& subcommands();

// The in-repo schema (schema/config.schema.json), compiled in.
std::string_view config_schema();

// Parse YAML text (JSON is accepted too), validate it against the schema and fill defaults.
// Throws Error(SchemaError, "<source>:<line>:<col>: <key path>: <reason>").
nlohmann::json load_config_text(const std::string& text, const std::string& source = "<config>");
nlohmann::json load_config_file(const std::string& path);

std::string sha256_hex(std::string_view data);
// Hash of the canonical (sorted-key, compact) JSON of a resolved config.
std::string config_hash(const nlohmann::json& cfg);
// 17 significant digits: round-trips every double.
std::string fmt17(double x);

struct RunOptions {
  std::string subcommand;
  std::string config_path;  // empty: all defaults
  std::string out_dir = "rvp_out";
  std::optional<std::uint64_t> seed;  // overrides the config seed
  int threads = 0;                    // 0: library default
  bool verbose = false;
};

// Runs one subcommand, writes its artifacts and manifest.json into out_dir, returns the exit status.
// Diagnostics go to stderr.
int run(const RunOptions& opt);

}  // namespace rvp::cli
