#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "rehab/attention.hpp"
#include "rehab/evaluation.hpp"
#include "rehab/model.hpp"
#include "rehab/synth.hpp"
#include "rehab/training.hpp"

namespace rehab::cli {

namespace {

namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string default_report_dir() {
  const char* env = std::getenv("REHAB_REPORT_DIR");
  return env && *env ? env : "reports";
}

/// One line holding every effective setting as key=value; each pair is also a valid --key=value flag.
class Header {
 public:
  explicit Header(std::string_view command) { line_ << "run: rehab " << command; }
  Header& add(std::string_view key, const std::string& value) {
    line_ << ' ' << key << '=' << value;
    return *this;
  }
  Header& add(std::string_view key, double value) { return add(key, num(value)); }
  Header& add(std::string_view key, std::uint64_t value) { return add(key, std::to_string(value)); }
  Header& add(std::string_view key, int value) { return add(key, std::to_string(value)); }
  Header& add(std::string_view key, bool value) { return add(key, std::string(value ? "true" : "false")); }
  template <class T>
  Header& add_list(std::string_view key, const std::vector<T>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
    return add(key, s);
  }
  std::string str() const { return line_.str(); }

 private:
  std::ostringstream line_;
};

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Corpus read_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir);
  Corpus c = load_corpus(dir);
  if (c.empty()) throw IoError("no sequences in " + dir);
  return c;
}

Model read_checkpoint(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

Exercise exercise_arg(const std::string& s) {
  try {
    return parse_exercise(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string exercise;
  std::size_t per_class = 40;
  std::string mode = "easy";
  std::optional<double> noise, margin, jitter;
  int group = 3;
  std::uint64_t seed = 0;
  std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--exercise", a.exercise, "torso_rotation | flank_stretch | hiding_face")->required();
  app.add_option("--per-class", a.per_class, "Repetitions per class")->check(CLI::PositiveNumber);
  app.add_option("--mode", a.mode, "easy (25 deg margins) or hard (8 deg)")->check(CLI::IsMember({"easy", "hard"}));
  app.add_option("--noise", a.noise, "Gaussian coordinate noise in meters (default by mode)");
  app.add_option("--margin", a.margin, "Error-class margin in degrees (default by mode)");
  app.add_option("--jitter", a.jitter, "Per-repetition angle jitter in degrees (default by mode)");
  app.add_option("--group", a.group, "Participant group 1-3")->check(CLI::Range(1, 3));
  app.add_option("--seed", a.seed, "Root seed");
  app.add_option("--out", a.out, "Output directory")->required();
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Exercise ex = exercise_arg(a.exercise);
  SynthOptions opt = a.mode == "hard" ? SynthOptions::hard() : SynthOptions::easy();
  if (a.margin) opt.margin_deg = *a.margin;
  if (a.jitter) opt.jitter_deg = *a.jitter;
  opt.group = static_cast<Group>(a.group);
  const double noise = a.noise.value_or(a.mode == "hard" ? kHardNoiseSigma : kEasyNoiseSigma);
  if (noise < 0 || opt.margin_deg < 0 || opt.jitter_deg < 0) throw ConfigError("noise, margin and jitter must be >= 0");

  out << Header("synth")
             .add("exercise", a.exercise)
             .add("per-class", std::uint64_t{a.per_class})
             .add("mode", a.mode)
             .add("noise", noise)
             .add("margin", opt.margin_deg)
             .add("jitter", opt.jitter_deg)
             .add("group", a.group)
             .add("seed", a.seed)
             .add("out", a.out)
             .str()
      << '\n';

  Corpus c = generate_corpus(a.per_class, ex, noise, a.seed, opt);
  for (auto& s : c.sequences) s.source_id = "g" + std::to_string(a.group) + "_" + s.source_id;
  try {
    save_corpus(a.out, c);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  out << "wrote " << c.size() << " sequences to " << a.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------- model flags

struct ModelArgs {
  std::string preset = "desk";
  std::optional<std::size_t> frames, heads, layers, width;
  bool j2s = true, pos = true, bias = true, bn = true;
};

void add_model(CLI::App& app, ModelArgs& m) {
  app.add_option("--preset", m.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--frames", m.frames, "Frames per resampled sequence");
  app.add_option("--heads", m.heads, "Attention heads");
  app.add_option("--layers", m.layers, "Layer count (uniform width, stride 1)");
  app.add_option("--width", m.width, "Channels per layer");
  app.add_flag("--j2s,!--no-j2s", m.j2s, "Joint-to-subgraph attention");
  app.add_flag("--pos,!--no-pos", m.pos, "Shortest-path positional bias");
  app.add_flag("--bias,!--no-bias", m.bias, "Attentive bias");
  app.add_flag("--bn,!--no-bn", m.bn, "Batch normalization");
}

ModelConfig model_config(const ModelArgs& m) {
  ModelConfig c = m.preset == "paper" ? ModelConfig::paper_scale() : ModelConfig::desk();
  if (m.layers) {
    c.num_layers = *m.layers;
    c.channels.assign(c.num_layers, m.width.value_or(c.channels.front()));
    c.temporal_strides.assign(c.num_layers, 1);
  } else if (m.width) {
    c.channels.assign(c.num_layers, *m.width);
  }
  if (m.frames) c.frames = *m.frames;
  if (m.heads) c.num_heads = *m.heads;
  c.use_joint2subgraph = m.j2s;
  c.use_pos_embedding = m.pos;
  c.use_attentive_bias = m.bias;
  c.use_batchnorm = m.bn;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void echo_model(Header& h, const ModelArgs& m, const ModelConfig& c) {
  h.add("preset", m.preset)
      .add("frames", std::uint64_t{c.frames})
      .add("heads", std::uint64_t{c.num_heads});
  if (m.layers) h.add("layers", std::uint64_t{*m.layers});
  if (m.width) h.add("width", std::uint64_t{*m.width});
  h.add("j2s", m.j2s).add("pos", m.pos).add("bias", m.bias).add("bn", m.bn);
}

// ---------------------------------------------------------------- split flags

struct SplitArgs {
  int scenario = 2;
  std::optional<double> ratio;
  bool whole = false;
};

void add_split(CLI::App& app, SplitArgs& s, bool allow_whole) {
  app.add_option("--scenario", s.scenario, "1: train group 3, test groups 1+2; 2: stratified 80:20; 3: group 1 + 15%")
      ->check(CLI::Range(1, 3));
  app.add_option("--ratio", s.ratio, "Test fraction (default by scenario)")->check(CLI::Range(0.0, 0.99));
  if (allow_whole) app.add_flag("--whole", s.whole, "Use every sequence instead of the scenario test split");
}

double split_ratio(const SplitArgs& s) { return s.ratio.value_or(default_test_ratio(s.scenario)); }

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus;
  std::string out;
  double lr = 2.5e-3;
  std::size_t batch = 10;
  std::size_t epochs = 600;
  std::vector<std::uint64_t> seeds{0};
  ModelArgs model;
  SplitArgs split;
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--corpus", a.corpus, "Corpus directory")->required();
  app.add_option("--out", a.out, "Output directory (default: report directory)");
  app.add_option("--lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--batch", a.batch, "Batch size")->check(CLI::PositiveNumber);
  app.add_option("--epochs", a.epochs, "Epochs")->check(CLI::PositiveNumber);
  app.add_option("--seed,--seeds", a.seeds, "Root seed(s), comma separated; several seeds train in parallel")
      ->delimiter(',');
  add_model(app, a.model);
  add_split(app, a.split, false);
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string checkpoint;
  EpochRecord last;
  std::optional<double> test_accuracy;
};

std::string run_stem(Exercise ex, int scenario, std::uint64_t seed) {
  return std::string(to_string(ex)) + "-s" + std::to_string(scenario) + "-seed" + std::to_string(seed);
}

SeedOutcome train_one(const Corpus& corpus, Exercise ex, const TrainArgs& a, const ModelConfig& mc,
                      std::uint64_t seed, const fs::path& out_dir) {
  const SplitPlan plan = make_split(corpus, a.split.scenario, split_ratio(a.split), seed);
  const Corpus train_set = subset(corpus, plan.train);
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.epochs = a.epochs;
  tc.seed = seed;

  const std::string stem = run_stem(ex, a.split.scenario, seed);
  const fs::path log_path = out_dir / (stem + ".jsonl");
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw IoError("cannot write " + log_path.string());
  TrainResult result = train(train_set, mc, tc, [&](const EpochRecord& r) { log << to_json_line(r) << '\n' << std::flush; });

  SeedOutcome o;
  o.seed = seed;
  o.checkpoint = (out_dir / (stem + ".ckpt")).string();
  o.last = result.log.epochs.back();
  save_checkpoint(o.checkpoint, result.model);
  if (!plan.test.empty()) {
    const EvaluationReport rep = evaluate(result.model, subset(corpus, plan.test));
    const ReportContext ctx{std::string(to_string(ex)), a.split.scenario, seed};
    write_file(out_dir / (stem + ".eval.json"), report_to_json(rep, ctx));
    write_file(out_dir / (stem + ".eval.txt"), format_report(rep, ctx));
    o.test_accuracy = rep.accuracy;
  }
  return o;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.seeds.empty()) throw ConfigError("at least one seed is required");
  const ModelConfig mc = model_config(a.model);
  TrainConfig probe;
  probe.learning_rate = a.lr;
  probe.batch_size = a.batch;
  probe.epochs = a.epochs;
  try {
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::string out_dir = a.out.empty() ? default_report_dir() : a.out;

  Header h("train");
  h.add("corpus", a.corpus).add("out", out_dir).add("lr", a.lr).add("batch", std::uint64_t{a.batch});
  h.add("epochs", std::uint64_t{a.epochs}).add_list("seeds", a.seeds);
  h.add("scenario", a.split.scenario).add("ratio", split_ratio(a.split));
  echo_model(h, a.model, mc);
  out << h.str() << '\n';

  const Corpus corpus = read_corpus(a.corpus);
  const Exercise ex = corpus.single_exercise();
  fs::create_directories(out_dir);

  std::vector<std::future<SeedOutcome>> jobs;
  for (std::uint64_t seed : a.seeds)
    jobs.push_back(std::async(std::launch::async, train_one, std::cref(corpus), ex, std::cref(a), std::cref(mc), seed,
                              fs::path(out_dir)));
  std::vector<SeedOutcome> results;
  for (auto& j : jobs) results.push_back(j.get());

  std::vector<double> acc;
  for (const auto& r : results) {
    out << "seed " << r.seed << ": epochs " << r.last.epoch << " loss " << num(r.last.loss) << " train-acc "
        << num(r.last.accuracy);
    if (r.test_accuracy) {
      out << " test-acc " << num(*r.test_accuracy);
      acc.push_back(*r.test_accuracy);
    }
    out << " -> " << r.checkpoint << '\n';
  }
  if (!acc.empty()) {
    const double n = static_cast<double>(acc.size());
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : acc) ss += (x - mean) * (x - mean);
    const double sd = acc.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    char line[128];
    std::snprintf(line, sizeof line, "test accuracy over %zu seed(s): %.2f +/- %.2f %%\n", acc.size(), 100.0 * mean,
                  100.0 * sd);
    out << line;
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::uint64_t seed = 0;
  SplitArgs split;
  std::string report_dir = default_report_dir();
  std::string name;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  app.add_option("--corpus", a.corpus, "Corpus directory")->required();
  app.add_option("--seed", a.seed, "Split seed (the training seed reproduces its held-out set)");
  add_split(app, a.split, true);
  app.add_option("--report-dir", a.report_dir, "Report directory (env REHAB_REPORT_DIR)");
  app.add_option("--name", a.name, "Report base name (default: checkpoint stem)");
}

Corpus selected(const Corpus& corpus, const SplitArgs& s, std::uint64_t seed) {
  if (s.whole) return corpus;
  const SplitPlan plan = make_split(corpus, s.scenario, split_ratio(s), seed);
  if (plan.test.empty()) throw std::invalid_argument("split leaves an empty test set");
  return subset(corpus, plan.test);
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const std::string name = a.name.empty() ? fs::path(a.checkpoint).stem().string() : a.name;
  out << Header("eval")
             .add("checkpoint", a.checkpoint)
             .add("corpus", a.corpus)
             .add("seed", a.seed)
             .add("scenario", a.split.scenario)
             .add("ratio", split_ratio(a.split))
             .add("whole", a.split.whole)
             .add("report-dir", a.report_dir)
             .add("name", name)
             .str()
      << '\n';
  Model model = read_checkpoint(a.checkpoint);
  const Corpus corpus = read_corpus(a.corpus);
  const EvaluationReport rep = evaluate(model, selected(corpus, a.split, a.seed));
  const ReportContext ctx{std::string(to_string(corpus.single_exercise())), a.split.scenario, a.seed};
  const std::string text = format_report(rep, ctx);
  write_file(fs::path(a.report_dir) / (name + ".json"), report_to_json(rep, ctx));
  write_file(fs::path(a.report_dir) / (name + ".txt"), text);
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> corpora;
  std::uint64_t seed = 0;
  SplitArgs split;
  std::string report_dir = default_report_dir();
  std::string name = "importance";
};

void add_analyze(CLI::App& app, AnalyzeArgs& a) {
  app.add_option("--checkpoint", a.checkpoints, "Checkpoint per exercise (repeatable)")->required()->delimiter(',');
  app.add_option("--corpus", a.corpora, "Corpus per checkpoint, same order")->required()->delimiter(',');
  app.add_option("--seed", a.seed, "Split seed");
  add_split(app, a.split, true);
  app.add_option("--report-dir", a.report_dir, "Output directory (env REHAB_REPORT_DIR)");
  app.add_option("--name", a.name, "Artifact base name");
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.checkpoints.size() != a.corpora.size()) throw ConfigError("need one --corpus per --checkpoint");
  if (a.checkpoints.size() > 3) throw ConfigError("at most 3 exercises per render");
  out << Header("analyze")
             .add("checkpoint", join(a.checkpoints))
             .add("corpus", join(a.corpora))
             .add("seed", a.seed)
             .add("scenario", a.split.scenario)
             .add("ratio", split_ratio(a.split))
             .add("whole", a.split.whole)
             .add("report-dir", a.report_dir)
             .add("name", a.name)
             .str()
      << '\n';

  std::vector<ImportanceRow> rows;
  std::vector<AttentionMap> maps;
  SkeletonTopology topology;
  HypergraphPartition partition;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    Model model = read_checkpoint(a.checkpoints[i]);
    const Corpus corpus = read_corpus(a.corpora[i]);
    const AttentionSummary s = collect_attention(model, selected(corpus, a.split, a.seed));
    ImportanceRow row{std::string(to_string(corpus.single_exercise())), joint_importance(s.all), {}};
    if (s.correct_count && s.incorrect_count) row.contrast = importance_contrast(s.correct, s.incorrect);
    rows.push_back(std::move(row));
    maps.push_back(s.all);
    topology = model.config.topology;
    partition = model.config.partition;
  }
  const std::string text = render_importance_text(rows, topology, partition);
  const fs::path dir(a.report_dir);
  write_file(dir / (a.name + ".json"), importance_to_json(rows, topology, partition, maps));
  write_file(dir / (a.name + ".txt"), text);
  write_file(dir / (a.name + ".svg"), render_importance_svg(rows, topology, partition));
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> reports;
  std::string report_dir = default_report_dir();
};

void add_report(CLI::App& app, ReportArgs& a) {
  app.add_option("reports", a.reports, "Evaluation report JSON files")->required();
  app.add_option("--report-dir", a.report_dir, "Where comparison.txt is written (env REHAB_REPORT_DIR)");
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  out << Header("report").add("reports", join(a.reports)).add("report-dir", a.report_dir).str() << '\n';
  std::map<std::pair<Exercise, int>, std::vector<double>> grouped;
  for (const auto& path : a.reports) {
    ReportContext ctx;
    const EvaluationReport r = report_from_json(read_file(path), &ctx);
    grouped[{parse_exercise(ctx.exercise), ctx.scenario}].push_back(r.accuracy);
  }
  std::vector<ComparisonEntry> entries;
  for (auto& [key, acc] : grouped) entries.push_back({key.first, key.second, acc});
  const std::string table = compare_table(entries);
  write_file(fs::path(a.report_dir) / "comparison.txt", table);
  out << table;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skeleton exercise error classification: synthetic data, training, evaluation, attention analysis"};
  app.name("rehab");
  app.set_config("--config", "", "TOML/INI file with [command] sections; flags win over file values");
  app.require_subcommand(1);

  SynthArgs synth;
  TrainArgs train_args;
  EvalArgs eval;
  AnalyzeArgs analyze;
  ReportArgs report;
  CLI::App* s_synth = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  CLI::App* s_train = app.add_subcommand("train", "Train one model per seed on a scenario split");
  CLI::App* s_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a scenario test split");
  CLI::App* s_analyze = app.add_subcommand("analyze", "Joint importance from attention weights");
  CLI::App* s_report = app.add_subcommand("report", "Compare evaluation reports with the reference table");
  add_synth(*s_synth, synth);
  add_train(*s_train, train_args);
  add_eval(*s_eval, eval);
  add_analyze(*s_analyze, analyze);
  add_report(*s_report, report);

  std::vector<std::string> argv_store{"rehab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*s_synth) return cmd_synth(synth, out);
    if (*s_train) return cmd_train(train_args, out);
    if (*s_eval) return cmd_eval(eval, out);
    if (*s_analyze) return cmd_analyze(analyze, out);
    if (*s_report) return cmd_report(report, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::out_of_range& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    // load/parse failures from the library surface as runtime_error
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  }
  return kInternal;
}

}  // namespace rehab::cli
