#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>

#include "ltqa/cli.hpp"
#include "ltqa/completion.hpp"
#include "ltqa/evaluator.hpp"
#include "ltqa/trainer.hpp"

namespace ltqa {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kManifestFile = "manifest.json";

// Tracks what a command reads and writes, then emits its manifest.
class Artifacts {
 public:
  Artifacts(std::string command, std::vector<std::string> argv) {
    manifest_.command = std::move(command);
    manifest_.argv = std::move(argv);
    manifest_.cwd = fs::current_path().string();
  }

  const fs::path& input(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("input '" + path.string() + "' does not exist");
    manifest_.inputs[path.string()] = sha256_file(path);
    input_paths_.push_back(fs::weakly_canonical(path));
    return path;
  }

  const fs::path& output(const std::string& flag, const fs::path& path) {
    guard(path);
    files_[flag] = path;
    return path;
  }

  const fs::path& output_dir(const std::string& flag, const fs::path& dir) {
    guard(dir);
    dirs_[flag] = dir;
    return dir;
  }

  Manifest& manifest() { return manifest_; }

  void seal(const fs::path& manifest_path) {
    for (const auto& [flag, path] : files_) {
      manifest_.outputs[flag] = {{path.string(), sha256_file(path)}};
      manifest_.output_is_dir[flag] = false;
    }
    for (const auto& [flag, dir] : dirs_) {
      auto& listing = manifest_.outputs[flag];
      for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir);
        if (rel == kManifestFile) continue;
        listing[rel.generic_string()] = sha256_file(entry.path());
      }
      manifest_.output_is_dir[flag] = true;
    }
    write_file(manifest_path, manifest_.to_json().dump(2) + "\n");
  }

 private:
  void guard(const fs::path& path) {
    const auto canonical = fs::weakly_canonical(path);
    for (const auto& in : input_paths_) {
      if (in == canonical || (fs::is_directory(canonical) && in.string().rfind(canonical.string() + "/", 0) == 0)) {
        throw ValidationError("output '" + path.string() + "' would overwrite input '" + in.string() + "'");
      }
    }
  }

  Manifest manifest_;
  std::vector<fs::path> input_paths_;
  std::map<std::string, fs::path> files_;
  std::map<std::string, fs::path> dirs_;
};

fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

std::string json_text(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Corpus for tokenizer training: questions and choices of a canonical
// instance file, or the lines of any other text file.
std::vector<std::string> load_corpus(const fs::path& path) {
  std::vector<std::string> corpus;
  if (path.extension() == ".json") {
    for (const auto& instance : read_instances(path)) {
      corpus.push_back(instance.question);
      corpus.insert(corpus.end(), instance.choices.begin(), instance.choices.end());
    }
    return corpus;
  }
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) corpus.push_back(line);
  return corpus;
}

struct ModelFlags {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 128;
  int max_len = 512;
  std::string pooling = "first_token";
  std::string instruction_prefix;
  std::uint64_t init_seed = 0;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--layers", f.layers, "encoder layers")->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "hidden width")->capture_default_str();
  cmd->add_option("--heads", f.heads, "attention heads")->capture_default_str();
  cmd->add_option("--ffn", f.ffn, "feed-forward width")->capture_default_str();
  cmd->add_option("--max-len", f.max_len, "token budget per sequence (also the position table size)")
      ->capture_default_str();
  cmd->add_option("--pooling", f.pooling, "first_token | mean")->capture_default_str();
  cmd->add_option("--instruction-prefix", f.instruction_prefix, "text prepended to every question");
  cmd->add_option("--init-seed", f.init_seed, "weight initialization seed")->capture_default_str();
}

struct HyperFlags {
  int batch_size = 16;
  double lr = 1e-3;
  int epochs = 10;
  std::uint64_t seed = 0;
  std::string head = "mc";
  std::string optimizer = "adam_like";
  std::optional<double> stop_at;
};

void add_hyper_flags(CLI::App* cmd, HyperFlags& f, bool searched) {
  if (!searched) {
    cmd->add_option("--batch-size", f.batch_size, "examples per step")->capture_default_str();
    cmd->add_option("--lr", f.lr, "learning rate")->capture_default_str();
    cmd->add_option("--seed", f.seed, "shuffle seed")->capture_default_str();
  }
  cmd->add_option("--epochs", f.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--head", f.head, "mc | sc")->capture_default_str();
  cmd->add_option("--optimizer", f.optimizer, "sgd | adam_like")->capture_default_str();
  cmd->add_option("--stop-at-accuracy", f.stop_at, "stop once validation accuracy reaches this value");
}

Hyperparams to_hyperparams(const HyperFlags& f) {
  Hyperparams hp;
  hp.batch_size = f.batch_size;
  hp.learning_rate = f.lr;
  hp.epochs = f.epochs;
  hp.seed = f.seed;
  hp.head = parse_head(f.head);
  hp.optimizer = parse_optimizer(f.optimizer);
  hp.stop_at_accuracy = f.stop_at;
  hp.validate();
  return hp;
}

struct TrainingSetup {
  MergeTable table;
  EncoderConfig config;
  std::vector<EncodedInstance> train_set;
  std::vector<EncodedInstance> val_set;
  nlohmann::json metadata;
};

TrainingSetup prepare_training(Artifacts& art, const fs::path& train_path, const fs::path& val_path,
                               const fs::path& tokenizer_path, const ModelFlags& mf, Head head) {
  TrainingSetup s;
  s.table = MergeTable::load(art.input(tokenizer_path));
  s.config.layers = mf.layers;
  s.config.hidden_dim = mf.hidden;
  s.config.heads = mf.heads;
  s.config.ffn_dim = mf.ffn;
  s.config.max_positions = mf.max_len;
  s.config.vocab_size = static_cast<int>(s.table.vocab_size());
  s.config.pooling = parse_pooling(mf.pooling);
  s.config.validate();
  if (mf.max_len < 4) throw ValidationError("--max-len must be at least 4");
  const auto max_len = static_cast<std::size_t>(mf.max_len);
  for (const auto& instance : read_instances(art.input(train_path))) {
    s.train_set.push_back(encode_instance(s.table, instance, head, max_len, mf.instruction_prefix));
  }
  for (const auto& instance : read_instances(art.input(val_path))) {
    s.val_set.push_back(encode_instance(s.table, instance, head, max_len, mf.instruction_prefix));
  }
  s.metadata = {{"head", to_string(head)},
                {"max_len", mf.max_len},
                {"instruction_prefix", mf.instruction_prefix},
                {"tokenizer", s.table.to_json()}};
  art.manifest().settings["encoder"] = s.config.to_json();
  art.manifest().settings["init_seed"] = mf.init_seed;
  art.manifest().settings["max_len"] = mf.max_len;
  art.manifest().settings["instruction_prefix"] = mf.instruction_prefix;
  return s;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

RenderOptions render_options(const std::string& label, bool percent, bool no_reference) {
  RenderOptions options;
  options.system_label = label;
  options.percent = percent;
  options.include_reference_rows = !no_reference;
  return options;
}

nlohmann::json table_json(const MetricsTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) rows.push_back(to_json(row));
  return rows;
}

DedupPolicy parse_policy(const std::string& normalization, const std::string& scope) {
  DedupPolicy policy;
  if (normalization == "exact") {
    policy.normalization = Normalization::exact;
  } else if (normalization != "casefold") {
    throw ValidationError("unknown normalization '" + normalization + "' (expected exact | casefold)");
  }
  if (scope == "question+choices") {
    policy.scope = DedupScope::question_plus_choices;
  } else if (scope != "question") {
    throw ValidationError("unknown dedup scope '" + scope + "' (expected question | question+choices)");
  }
  return policy;
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int error_exit(const std::string& message, int code) {
  std::cerr << "error: " << message << "\n";
  return code;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Lateral-thinking multiple-choice QA pipeline", "ltqa"};
  app.set_config("--config", "", "key = value experiment file; command-line flags win");
  app.fallthrough();
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a source file to the canonical instance format");
  fs::path ingest_in, ingest_out;
  std::string ingest_format = "brainteaser", ingest_subtask = "sentence";
  ingest->add_option("--in", ingest_in, "source file")->required();
  ingest->add_option("--format", ingest_format, "brainteaser | humor | canonical")->capture_default_str();
  ingest->add_option("--subtask", ingest_subtask, "sentence | word (brainteaser only)")->capture_default_str();
  ingest->add_option("--out", ingest_out, "canonical output file")->required();

  // remap
  auto* remap = app.add_subcommand("remap", "Convert five-choice riddles to four-choice instances");
  fs::path remap_in, remap_out;
  std::optional<std::uint64_t> remap_seed;
  remap->add_option("--in", remap_in, "riddle JSON Lines file")->required();
  remap->add_option("--out", remap_out, "canonical output file")->required();
  remap->add_option("--shuffle-seed", remap_seed, "permute the kept choices with this seed");

  // dedup
  auto* dedup_cmd = app.add_subcommand("dedup", "Drop repeated questions, keeping first occurrences");
  std::vector<fs::path> dedup_in;
  fs::path dedup_out, dedup_dropped;
  std::string dedup_norm = "casefold", dedup_scope = "question";
  dedup_cmd->add_option("--in", dedup_in, "canonical files, concatenated in order")->required();
  dedup_cmd->add_option("--out", dedup_out, "kept instances")->required();
  dedup_cmd->add_option("--dropped", dedup_dropped, "dropped instances");
  dedup_cmd->add_option("--normalization", dedup_norm, "exact | casefold")->capture_default_str();
  dedup_cmd->add_option("--scope", dedup_scope, "question | question+choices")->capture_default_str();

  // generate
  auto* generate = app.add_subcommand("generate", "Collect humor instances from a completion service");
  std::string gen_prompt = "p1", gen_endpoint;
  fs::path gen_mock, gen_accumulated, gen_out;
  int gen_rounds = 1;
  generate->add_option("--prompt", gen_prompt, "p1 | p2 | p3")->capture_default_str();
  generate->add_option("--rounds", gen_rounds, "requests to send")->capture_default_str();
  auto* endpoint_opt = generate->add_option("--endpoint", gen_endpoint, "service URL, or 'env' to read it from the environment");
  auto* mock_opt = generate->add_option("--mock", gen_mock, "file whose contents stand in for every response");
  endpoint_opt->excludes(mock_opt);
  generate->add_option("--accumulated", gen_accumulated, "existing instances to extend");
  generate->add_option("--out", gen_out, "accumulated plus new instances")->required();

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "Weight, merge and shuffle sources; optionally split off validation");
  std::vector<std::string> mix_sources;
  std::uint64_t mix_seed = 0;
  fs::path mix_out, mix_val_out;
  std::string mix_val_fraction;
  mix_cmd->add_option("--source", mix_sources, "FILE or FILE@WEIGHT (weight as 0.5 or 1/2)")->required();
  mix_cmd->add_option("--seed", mix_seed, "sampling and shuffle seed")->capture_default_str();
  mix_cmd->add_option("--out", mix_out, "mixed (training) instances")->required();
  auto* val_fraction_opt = mix_cmd->add_option("--val-fraction", mix_val_fraction, "share of groups held out");
  auto* val_out_opt = mix_cmd->add_option("--val-out", mix_val_out, "held-out instances");
  val_fraction_opt->needs(val_out_opt);
  val_out_opt->needs(val_fraction_opt);

  // tok
  auto* tok = app.add_subcommand("tok", "Tokenizer training and inspection");
  tok->require_subcommand(1);
  auto* tok_train = tok->add_subcommand("train", "Learn a merge table");
  fs::path tok_corpus, tok_out;
  std::size_t tok_vocab = 1024;
  std::uint64_t tok_seed = 0;
  tok_train->add_option("--corpus", tok_corpus, "canonical .json instances or plain text lines")->required();
  tok_train->add_option("--vocab", tok_vocab, "target vocabulary size including specials")->required();
  tok_train->add_option("--seed", tok_seed, "recorded only; training is deterministic")->capture_default_str();
  tok_train->add_option("--out", tok_out, "merge table JSON")->required();
  auto* tok_encode = tok->add_subcommand("encode", "Print the token ids of a string");
  fs::path tok_table;
  std::string tok_text;
  std::size_t tok_max_len = 512;
  tok_encode->add_option("--tokenizer", tok_table, "merge table JSON")->required();
  tok_encode->add_option("--text", tok_text, "text to encode")->required();
  tok_encode->add_option("--max-len", tok_max_len, "token budget")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Fine-tune one configuration");
  fs::path train_path, val_path, tokenizer_path, out_dir;
  ModelFlags model_flags;
  HyperFlags hyper_flags;
  train_cmd->add_option("--train", train_path, "training instances")->required();
  train_cmd->add_option("--val", val_path, "validation instances")->required();
  train_cmd->add_option("--tokenizer", tokenizer_path, "merge table JSON")->required();
  train_cmd->add_option("--out-dir", out_dir, "receives checkpoint.bin, report.json, manifest.json")->required();
  add_model_flags(train_cmd, model_flags);
  add_hyper_flags(train_cmd, hyper_flags, false);

  // search
  auto* search_cmd = app.add_subcommand("search", "Random search over batch size and learning rate");
  int search_trials = 6, search_jobs = 1;
  std::uint64_t search_seed = 0;
  std::string search_batches = "4,16,32", search_lrs = "5e-5,1e-4,2e-4";
  search_cmd->add_option("--train", train_path, "training instances")->required();
  search_cmd->add_option("--val", val_path, "validation instances")->required();
  search_cmd->add_option("--tokenizer", tokenizer_path, "merge table JSON")->required();
  search_cmd->add_option("--out-dir", out_dir, "receives checkpoint.bin, search.json, manifest.json")->required();
  search_cmd->add_option("--trials", search_trials, "sampled configurations")->capture_default_str();
  search_cmd->add_option("--base-seed", search_seed, "trial i uses seed base+i")->capture_default_str();
  search_cmd->add_option("--batch-sizes", search_batches, "comma-separated")->capture_default_str();
  search_cmd->add_option("--lrs", search_lrs, "comma-separated")->capture_default_str();
  search_cmd->add_option("--jobs", search_jobs, "concurrent trials")->capture_default_str();
  add_model_flags(search_cmd, model_flags);
  add_hyper_flags(search_cmd, hyper_flags, true);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Write predictions for an instance file");
  fs::path pred_ckpt, pred_in, pred_out;
  predict_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint written by train or search")->required();
  predict_cmd->add_option("--in", pred_in, "canonical instances")->required();
  predict_cmd->add_option("--out", pred_out, "JSON Lines predictions")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions and print the results table");
  fs::path eval_preds, eval_gold, eval_report;
  std::string eval_subtask = "all", eval_label = "this run";
  bool eval_percent = false, eval_no_ref = false;
  eval_cmd->add_option("--preds", eval_preds, "JSON Lines predictions")->required();
  eval_cmd->add_option("--gold", eval_gold, "canonical gold instances")->required();
  eval_cmd->add_option("--subtask", eval_subtask, "sentence | word | external | all")->capture_default_str();
  eval_cmd->add_option("--report", eval_report, "machine-readable results JSON");
  eval_cmd->add_option("--label", eval_label, "row label for this system")->capture_default_str();
  eval_cmd->add_flag("--percent", eval_percent, "render percentages");
  eval_cmd->add_flag("--no-reference", eval_no_ref, "omit the reported reference rows");

  // report
  auto* report_cmd = app.add_subcommand("report", "Render saved results and ablation rows");
  fs::path report_results, report_out;
  std::vector<std::string> report_ablation;
  int report_places = 1;
  std::string report_label = "this run";
  bool report_percent = false, report_no_ref = false;
  report_cmd->add_option("--results", report_results, "JSON written by eval --report");
  report_cmd->add_option("--ablation", report_ablation, "LABEL=ACCURACY, in table order");
  report_cmd->add_option("--places", report_places, "decimal places of ablation values")->capture_default_str();
  report_cmd->add_option("--label", report_label, "row label for this system")->capture_default_str();
  report_cmd->add_flag("--percent", report_percent, "render percentages");
  report_cmd->add_flag("--no-reference", report_no_ref, "omit the reported reference rows");
  report_cmd->add_option("--out", report_out, "also write the rendered text here");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a manifest and compare output digests");
  fs::path replay_path, replay_scratch;
  replay_cmd->add_option("--manifest", replay_path, "manifest written by an earlier run")->required();
  replay_cmd->add_option("--scratch", replay_scratch, "where replayed outputs go (default: a temp directory)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Artifacts art(command, args);
  // argv[0] must be the command name for replay; drop a leading --config.
  {
    auto& argv = art.manifest().argv;
    auto it = std::find(argv.begin(), argv.end(), command);
    std::rotate(argv.begin(), it, it + 1);
  }

  try {
    if (const auto* config = app.get_config_ptr(); config && config->count() > 0) {
      art.input(config->as<std::string>());
    }

    if (*ingest) {
      std::vector<QAInstance> out;
      art.input(ingest_in);
      if (ingest_format == "brainteaser") {
        out = load_brainteaser(ingest_in, parse_subtask(ingest_subtask));
      } else if (ingest_format == "humor") {
        out = load_humor(ingest_in);
      } else if (ingest_format == "canonical") {
        out = read_instances(ingest_in);
      } else {
        throw ValidationError("unknown format '" + ingest_format + "'");
      }
      validate_collection(out);
      write_instances(art.output("--out", ingest_out), out);
      DatasetStats stats;
      stats.add(out, "all");
      std::cout << stats.render();
      art.seal(sidecar(ingest_out));
      return 0;
    }

    if (*remap) {
      std::vector<QAInstance> out;
      for (const auto& raw : load_riddlesense(art.input(remap_in))) out.push_back(remap_five_to_four(raw, remap_seed));
      write_instances(art.output("--out", remap_out), out);
      art.manifest().settings["shuffle_seed"] = remap_seed ? nlohmann::json(*remap_seed) : nlohmann::json(nullptr);
      std::cout << "remapped " << out.size() << " riddles to four choices\n";
      art.seal(sidecar(remap_out));
      return 0;
    }

    if (*dedup_cmd) {
      std::vector<QAInstance> all;
      for (const auto& path : dedup_in) {
        auto part = read_instances(art.input(path));
        all.insert(all.end(), part.begin(), part.end());
      }
      const auto result = dedup(all, parse_policy(dedup_norm, dedup_scope));
      write_instances(art.output("--out", dedup_out), result.kept);
      if (!dedup_dropped.empty()) write_instances(art.output("--dropped", dedup_dropped), result.dropped);
      art.manifest().settings = {{"normalization", dedup_norm}, {"scope", dedup_scope}};
      std::cout << "kept " << result.kept.size() << ", dropped " << result.dropped.size() << "\n";
      art.seal(sidecar(dedup_out));
      return 0;
    }

    if (*generate) {
      std::unique_ptr<CompletionClient> client;
      if (!gen_mock.empty()) {
        client = std::make_unique<FileCompletionClient>(art.input(gen_mock));
      } else if (!gen_endpoint.empty()) {
        if (gen_endpoint == "env") {
          const char* url = std::getenv(HttpCompletionClient::kEndpointEnv);
          if (!url || !*url) throw ValidationError(std::string(HttpCompletionClient::kEndpointEnv) + " is not set");
          gen_endpoint = url;
        }
        const char* key = std::getenv(HttpCompletionClient::kCredentialEnv);
        client = std::make_unique<HttpCompletionClient>(gen_endpoint, key ? key : "");
      } else {
        throw ValidationError("generate needs --endpoint URL, --endpoint env or --mock FILE");
      }
      if (gen_rounds < 1) throw ValidationError("--rounds must be at least 1");
      const auto prompt = parse_prompt_id(gen_prompt);
      std::vector<QAInstance> accumulated;
      if (!gen_accumulated.empty()) accumulated = read_instances(art.input(gen_accumulated));
      art.output("--out", gen_out);
      const auto before = accumulated.size();
      for (int round = 0; round < gen_rounds; ++round) {
        auto fresh = generate_humor_batch(*client, prompt, accumulated);
        accumulated.insert(accumulated.end(), fresh.begin(), fresh.end());
      }
      write_instances(gen_out, accumulated);
      art.manifest().settings = {{"prompt", gen_prompt}, {"rounds", gen_rounds},
                                 {"endpoint", gen_mock.empty() ? gen_endpoint : "mock"}};
      std::cout << "added " << accumulated.size() - before << " new instances (" << accumulated.size() << " total)\n";
      art.seal(sidecar(gen_out));
      return 0;
    }

    if (*mix_cmd) {
      std::vector<WeightedSource> sources;
      nlohmann::json weights = nlohmann::json::array();
      for (const auto& spec : mix_sources) {
        const auto at = spec.rfind('@');
        WeightedSource source;
        const fs::path path = at == std::string::npos ? spec : spec.substr(0, at);
        if (at != std::string::npos) source.weight = parse_ratio(spec.substr(at + 1));
        source.instances = read_instances(art.input(path));
        weights.push_back({{"path", path.string()}, {"num", source.weight.num}, {"den", source.weight.den}});
        sources.push_back(std::move(source));
      }
      auto mixed = mix(sources, mix_seed);
      art.manifest().settings = {{"seed", mix_seed}, {"weights", weights}};
      DatasetStats stats;
      if (!mix_val_fraction.empty()) {
        auto split = split_train_val(mixed, parse_ratio(mix_val_fraction), mix_seed);
        write_instances(art.output("--out", mix_out), split.train);
        write_instances(art.output("--val-out", mix_val_out), split.val);
        art.manifest().settings["val_fraction"] = mix_val_fraction;
        stats.add(split.train, "train");
        stats.add(split.val, "val");
      } else {
        write_instances(art.output("--out", mix_out), mixed);
        stats.add(mixed, "train");
      }
      std::cout << stats.render();
      art.seal(sidecar(mix_out));
      return 0;
    }

    if (*tok_train) {
      const auto corpus = load_corpus(art.input(tok_corpus));
      const auto table = train_bpe(corpus, tok_vocab, tok_seed);
      table.save(art.output("--out", tok_out));
      art.manifest().settings = {{"vocab", tok_vocab}, {"seed", tok_seed}};
      std::cout << "learned " << table.num_merges() << " merges (vocabulary " << table.vocab_size() << ")\n";
      art.seal(sidecar(tok_out));
      return 0;
    }

    if (*tok_encode) {
      const auto table = MergeTable::load(tok_table);
      const auto seq = encode(table, tok_text, tok_max_len);
      std::cout << nlohmann::json{{"ids", seq.ids}, {"truncated", seq.truncated}}.dump() << "\n";
      return 0;
    }

    if (*train_cmd) {
      const auto hp = to_hyperparams(hyper_flags);
      auto setup = prepare_training(art, train_path, val_path, tokenizer_path, model_flags, hp.head);
      art.output_dir("--out-dir", out_dir);
      art.manifest().settings["hyperparams"] = hp.to_json();
      const auto init = init_params<float>(setup.config, model_flags.init_seed);
      const auto report = train(setup.config, init, setup.train_set, setup.val_set, hp);
      save_checkpoint(out_dir / kCheckpointFile, Checkpoint{setup.config, report.best_params, setup.metadata});
      auto doc = report.to_json();
      doc["encoder"] = setup.config.to_json();
      write_file(out_dir / "report.json", json_text(doc));
      for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
        std::cout << "epoch " << e + 1 << "  loss " << fixed4(report.train_loss[e]) << "  val acc "
                  << fixed4(report.val_accuracy[e]) << "\n";
      }
      std::cout << "best epoch " << report.best_epoch << "  val acc " << fixed4(report.best_val_accuracy()) << "\n";
      art.manifest().timing = {{"wall_seconds", report.wall_seconds}};
      art.seal(out_dir / kManifestFile);
      return 0;
    }

    if (*search_cmd) {
      Hyperparams fixed = to_hyperparams(hyper_flags);
      SearchSpace space;
      space.batch_sizes.clear();
      space.learning_rates.clear();
      for (const auto& b : split_csv(search_batches)) space.batch_sizes.push_back(std::stoi(b));
      for (const auto& lr : split_csv(search_lrs)) space.learning_rates.push_back(std::stod(lr));
      if (search_jobs < 1) throw ValidationError("--jobs must be at least 1");
      auto setup = prepare_training(art, train_path, val_path, tokenizer_path, model_flags, fixed.head);
      art.output_dir("--out-dir", out_dir);
      const auto started = std::chrono::steady_clock::now();
      const auto init = init_params<float>(setup.config, model_flags.init_seed);
      const auto result = random_search(space, search_trials, search_seed, fixed, setup.config, init, setup.train_set,
                                        setup.val_set, search_jobs);
      const auto& best = result.reports[result.best_trial];
      save_checkpoint(out_dir / kCheckpointFile, Checkpoint{setup.config, best.best_params, setup.metadata});
      nlohmann::json doc{{"best_trial", result.best_trial}, {"best", result.best.to_json()}};
      for (const auto& r : result.reports) doc["trials"].push_back(r.to_json());
      doc["encoder"] = setup.config.to_json();
      write_file(out_dir / "search.json", json_text(doc));
      for (std::size_t i = 0; i < result.reports.size(); ++i) {
        const auto& hp = result.sampled[i];
        std::cout << "trial " << i << "  batch " << hp.batch_size << "  lr " << hp.learning_rate << "  best val acc "
                  << fixed4(result.reports[i].best_val_accuracy()) << (i == result.best_trial ? "  *" : "") << "\n";
      }
      art.manifest().settings["search"] = {{"trials", search_trials},       {"base_seed", search_seed},
                                           {"batch_sizes", space.batch_sizes}, {"learning_rates", space.learning_rates},
                                           {"fixed", fixed.to_json()}};
      art.manifest().timing = {{"wall_seconds", elapsed_since(started)}, {"jobs", search_jobs}};
      art.seal(out_dir / kManifestFile);
      return 0;
    }

    if (*predict_cmd) {
      const auto ckpt = load_checkpoint(art.input(pred_ckpt));
      const auto instances = read_instances(art.input(pred_in));
      art.output("--out", pred_out);
      Head head;
      MergeTable table;
      std::size_t max_len = 0;
      std::string prefix;
      try {
        head = parse_head(ckpt.metadata.at("head").get<std::string>());
        table = MergeTable::from_json(ckpt.metadata.at("tokenizer"));
        max_len = ckpt.metadata.at("max_len").get<std::size_t>();
        prefix = ckpt.metadata.at("instruction_prefix").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
      }
      std::vector<Prediction> preds;
      for (const auto& instance : instances) {
        const auto encoded = encode_instance(table, instance, head, max_len, prefix);
        preds.push_back({instance.id, predict(ckpt.params, ckpt.config, encoded, head)});
      }
      write_file(pred_out, predictions_to_jsonl(preds));
      std::cout << "wrote " << preds.size() << " predictions\n";
      art.seal(sidecar(pred_out));
      return 0;
    }

    if (*eval_cmd) {
      const auto gold = read_instances(art.input(eval_gold));
      const auto preds = read_predictions(art.input(eval_preds));
      if (!eval_report.empty()) art.output("--report", eval_report);
      std::optional<Subtask> only;
      if (eval_subtask != "all") only = parse_subtask(eval_subtask);

      std::unordered_map<std::string, Subtask> subtask_of;
      std::map<Subtask, std::vector<QAInstance>> gold_by;
      for (const auto& instance : gold) {
        subtask_of.emplace(instance.id, instance.subtask);
        if (!only || instance.subtask == *only) gold_by[instance.subtask].push_back(instance);
      }
      if (gold_by.empty()) throw ValidationError("gold file has no instances for subtask '" + eval_subtask + "'");
      std::map<Subtask, std::vector<Prediction>> preds_by;
      for (const auto& pred : preds) {
        auto it = subtask_of.find(pred.instance_id);
        if (it == subtask_of.end()) throw ValidationError("prediction for unknown instance id '" + pred.instance_id + "'");
        if (gold_by.contains(it->second)) preds_by[it->second].push_back(pred);
      }
      const auto table = build_results_table(preds_by, gold_by);
      std::cout << render_results_table(table, render_options(eval_label, eval_percent, eval_no_ref));
      if (!eval_report.empty()) {
        write_file(eval_report, json_text(table_json(table)));
        art.seal(sidecar(eval_report));
      }
      return 0;
    }

    if (*report_cmd) {
      if (report_results.empty() && report_ablation.empty()) {
        throw ValidationError("report needs --results and/or --ablation");
      }
      std::string text;
      if (!report_results.empty()) {
        nlohmann::json doc;
        try {
          doc = nlohmann::json::parse(read_file(art.input(report_results)));
        } catch (const nlohmann::json::parse_error& e) {
          throw FormatError(report_results.string() + ": " + e.what());
        }
        if (!doc.is_array()) throw FormatError(report_results.string() + ": expected an array of subtask rows");
        MetricsTable table;
        for (const auto& row : doc) table.rows.push_back(subtask_metrics_from_json(row));
        text += render_results_table(table, render_options(report_label, report_percent, report_no_ref));
      }
      if (!report_ablation.empty()) {
        std::vector<std::pair<std::string, Ratio>> rows;
        for (const auto& spec : report_ablation) {
          const auto eq = spec.rfind('=');
          if (eq == std::string::npos) throw ValidationError("--ablation expects LABEL=ACCURACY, got '" + spec + "'");
          rows.emplace_back(spec.substr(0, eq), parse_ratio(spec.substr(eq + 1)));
        }
        if (!text.empty()) text += "\n";
        text += render_ablation(ablation_deltas(rows), report_places);
      }
      std::cout << text;
      if (!report_out.empty()) {
        write_file(art.output("--out", report_out), text);
        art.seal(sidecar(report_out));
      }
      return 0;
    }

    if (*replay_cmd) {
      std::string body = read_file(replay_path);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(replay_path.string() + ": " + e.what());
      }
      const auto manifest = Manifest::from_json(doc);
      fs::path scratch = replay_scratch;
      const bool temporary = scratch.empty();
      if (temporary) {
        scratch = fs::temp_directory_path() / ("ltqa-replay-" + sha256_hex(body + fs::absolute(replay_path).string()).substr(0, 16));
        fs::remove_all(scratch);
      }
      const auto mismatches = replay_manifest(manifest, scratch);
      if (temporary) fs::remove_all(scratch);
      if (!mismatches.empty()) {
        for (const auto& m : mismatches) std::cerr << "mismatch: " << m << "\n";
        return 1;
      }
      std::cout << "replay of '" << manifest.command << "' reproduced every output\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    return error_exit(e.what(), 1);
  } catch (const FormatError& e) {
    if (!e.raw().empty()) std::cerr << "raw body:\n" << e.raw() << "\n";
    return error_exit(e.what(), 1);
  } catch (const IoError& e) {
    return error_exit(e.what(), 2);
  } catch (const TransportError& e) {
    return error_exit(e.what(), 2);
  } catch (const fs::filesystem_error& e) {
    return error_exit(e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return error_exit(e.what(), 1);
  } catch (const std::exception& e) {
    return error_exit(e.what(), 1);
  }
  return 1;
}

}  // namespace ltqa
