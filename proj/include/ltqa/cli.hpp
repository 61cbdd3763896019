#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ltqa {

// Exit codes: 0 success, 1 usage/validation/format error, 2 I/O or transport
// error. `args` excludes the program name.
int run_command(const std::vector<std::string>& args);

// Written next to every artifact a command produces. Replay re-runs `argv`
// with each output flag pointed at a scratch location and compares digests.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string cwd;  // relative paths in argv resolve against this
  std::map<std::string, std::string> inputs;  // path -> sha256
  // flag -> {path -> sha256}. A flag naming a directory lists every file
  // written beneath it, keyed by the path relative to the directory.
  std::map<std::string, std::map<std::string, std::string>> outputs;
  std::map<std::string, bool> output_is_dir;
  nlohmann::json settings = nlohmann::json::object();  // config, hyperparams, seeds
  nlohmann::json timing = nlohmann::json::object();    // excluded from replay checks

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& doc);
};

// Re-executes the manifest's command and returns the list of outputs whose
// digest differs (empty when the replay is bit-exact). Throws ValidationError
// when a recorded input changed since the original run.
std::vector<std::string> replay_manifest(const Manifest& manifest, const std::filesystem::path& scratch_dir);

}  // namespace ltqa
