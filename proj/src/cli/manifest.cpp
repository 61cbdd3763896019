#include <algorithm>

#include "ltqa/cli.hpp"
#include "ltqa/common.hpp"

namespace ltqa {

namespace fs = std::filesystem;

nlohmann::json Manifest::to_json() const {
  nlohmann::json outs = nlohmann::json::object();
  for (const auto& [flag, files] : outputs) {
    outs[flag] = {{"directory", output_is_dir.count(flag) ? output_is_dir.at(flag) : false}, {"files", files}};
  }
  return nlohmann::json{{"command", command}, {"argv", argv}, {"cwd", cwd}, {"inputs", inputs},
                        {"outputs", outs},    {"settings", settings}, {"timing", timing}};
}

Manifest Manifest::from_json(const nlohmann::json& doc) {
  Manifest m;
  try {
    m.command = doc.at("command").get<std::string>();
    m.argv = doc.at("argv").get<std::vector<std::string>>();
    m.cwd = doc.at("cwd").get<std::string>();
    m.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
    for (const auto& [flag, entry] : doc.at("outputs").items()) {
      m.outputs[flag] = entry.at("files").get<std::map<std::string, std::string>>();
      m.output_is_dir[flag] = entry.at("directory").get<bool>();
    }
    m.settings = doc.value("settings", nlohmann::json::object());
    m.timing = doc.value("timing", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  if (m.argv.empty() || m.argv.front() != m.command) throw FormatError("manifest argv does not start with its command");
  return m;
}

namespace {

// Drops every occurrence of `flag` ("--out X" and "--out=X") from argv.
std::vector<std::string> strip_flag(const std::vector<std::string>& argv, const std::string& flag) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == flag) {
      ++i;
      continue;
    }
    if (argv[i].rfind(flag + "=", 0) == 0) continue;
    out.push_back(argv[i]);
  }
  return out;
}

std::string flag_slug(const std::string& flag) {
  std::string slug = flag;
  slug.erase(0, slug.find_first_not_of('-'));
  return slug;
}

}  // namespace

std::vector<std::string> replay_manifest(const Manifest& manifest, const fs::path& scratch) {
  const fs::path scratch_dir = fs::absolute(scratch);
  struct CwdGuard {
    fs::path saved = fs::current_path();
    ~CwdGuard() { fs::current_path(saved); }
  } guard;
  if (!fs::is_directory(manifest.cwd)) throw ValidationError("replay directory '" + manifest.cwd + "' does not exist");
  fs::current_path(manifest.cwd);

  for (const auto& [path, digest] : manifest.inputs) {
    if (!fs::exists(path)) throw ValidationError("replay input '" + path + "' no longer exists");
    if (sha256_file(path) != digest) throw ValidationError("replay input '" + path + "' changed since the recorded run");
  }

  // The config file can name outputs too; trailing flags win over it.
  std::vector<std::string> argv = manifest.argv;
  std::map<std::string, fs::path> targets;
  for (const auto& [flag, files] : manifest.outputs) {
    argv = strip_flag(argv, flag);
    const bool is_dir = manifest.output_is_dir.count(flag) && manifest.output_is_dir.at(flag);
    fs::path target = scratch_dir / flag_slug(flag);
    if (!is_dir) {
      if (files.size() != 1) throw FormatError("file output " + flag + " must list exactly one file");
      target /= fs::path(files.begin()->first).filename();
    }
    targets[flag] = target;
    argv.push_back(flag);
    argv.push_back(target.string());
  }

  fs::create_directories(scratch_dir);
  const int code = run_command(argv);
  if (code != 0) throw Error("replayed command exited with code " + std::to_string(code));

  std::vector<std::string> mismatches;
  for (const auto& [flag, files] : manifest.outputs) {
    const bool is_dir = manifest.output_is_dir.count(flag) && manifest.output_is_dir.at(flag);
    for (const auto& [path, digest] : files) {
      const fs::path replayed = is_dir ? targets[flag] / path : targets[flag];
      if (!fs::exists(replayed)) {
        mismatches.push_back(path + " (not produced)");
      } else if (sha256_file(replayed) != digest) {
        mismatches.push_back(path);
      }
    }
  }
  return mismatches;
}

}  // namespace ltqa
