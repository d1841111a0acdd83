#include "codemix/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "codemix/analysis/analysis.hpp"
#include "codemix/cli/run_config.hpp"
#include "codemix/errors.hpp"
#include "codemix/numerics/random.hpp"
#include "codemix/trainer/eval.hpp"
#include "codemix/trainer/train.hpp"

namespace codemix {

namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::vector<int> stages;
  std::string checkpoint;
  std::optional<std::size_t> beam;
  std::vector<std::string> look_ahead;
  std::string compare;
  bool oracle = false;
  bool stream = false;
  std::vector<std::string> ids;
  std::string split;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

std::size_t parse_look_ahead(const std::string& s) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
    return look_ahead_from_json(Json(std::stoull(s)));
  return look_ahead_from_json(Json(s));
}

RunConfig load_run_config(const Flags& f) {
  RunConfig c = default_run_config();
  if (!f.config.empty()) {
    Json j;
    try {
      j = Json::parse(read_file(f.config));
    } catch (const Json::parse_error& e) {
      throw ConfigError(f.config + ": " + e.what());
    }
    c = run_config_from_json(j);
  }
  if (f.seed) {
    c.apply_seed(*f.seed);
    c.corpus.seed = *f.seed;
  }
  if (f.beam) c.beam_width = *f.beam;
  if (!f.split.empty()) c.decode_split = f.split;
  if (!f.ids.empty()) c.utterances = f.ids;
  c.validate();
  return c;
}

DecodeOptions decode_options(const RunConfig& c) {
  DecodeOptions o;
  o.beam_width = c.beam_width;
  o.max_symbols_per_frame = c.max_symbols_per_frame;
  o.smoothing_alpha = c.smoothing_alpha;
  o.validate();
  return o;
}

Dataset load_checked_dataset(const RunConfig& c) {
  if (!fs::exists(c.paths.dataset / "manifest.json"))
    throw DataError("no dataset at " + c.paths.dataset.string() + " (run synth first)");
  Dataset d = load_dataset(c.paths.dataset);
  if (canonical_dump(to_json(d.config)) != canonical_dump(to_json(c.corpus)))
    throw ConfigError("dataset at " + c.paths.dataset.string() +
                      " was generated from a different corpus config");
  return d;
}

fs::path stage_checkpoint(const RunConfig& c, int stage) {
  return c.paths.checkpoints / ("stage" + std::to_string(stage) + ".ckpt");
}

fs::path default_checkpoint(const RunConfig& c, const Flags& f) {
  if (!f.checkpoint.empty()) return f.checkpoint;
  const int last = c.stages.empty() ? 3 : c.stages.back().stage;
  return stage_checkpoint(c, last);
}

Checkpoint load_checked_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

// Every artifact directory carries provenance.json with one entry per
// artifact; entries from earlier invocations are kept.
void record_provenance(const fs::path& dir, const std::string& artifact, const RunConfig& c,
                       const std::string& command, Json extra) {
  const fs::path path = dir / "provenance.json";
  Json p = Json::object();
  if (fs::exists(path)) {
    try {
      p = Json::parse(read_file(path));
    } catch (const Json::parse_error&) {
      p = Json::object();
    }
    if (!p.is_object()) p = Json::object();
  }
  p["tool"] = "codemix";
  p["version"] = CODEMIX_VERSION;
  extra["command"] = command;
  extra["config_hash"] = fnv1a_hex(canonical_dump(to_json(c)));
  extra["seed"] = c.seed;
  p["artifacts"][artifact] = std::move(extra);
  write_file(path, canonical_dump(p, 2) + "\n");
}

Json checkpoint_identity(const fs::path& path) {
  return {{"path", path.generic_string()}, {"hash", fnv1a_hex(read_file(path))}};
}

const Utterance& find_utterance(const Dataset& d, const std::string& id) {
  for (const auto* split : {&d.train, &d.test_a, &d.test_b, &d.test_mixed})
    for (const Utterance& u : *split)
      if (u.id == id) return u;
  throw DataError("no utterance with id '" + id + "'");
}

const std::vector<Utterance>& split_by_name(const Dataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "test_A") return d.test_a;
  if (name == "test_B") return d.test_b;
  if (name == "test_mixed") return d.test_mixed;
  throw ConfigError("unknown split '" + name + "'");
}

// --- commands ---------------------------------------------------------------

int cmd_synth(const Flags& f, std::ostream& out) {
  RunConfig c = load_run_config(f);
  const fs::path dir = c.paths.dataset;
  if (fs::exists(dir / "manifest.json") && !f.force)
    throw ConfigError(dir.string() + " already holds a dataset; pass --force to overwrite");
  const Dataset d = make_dataset(c.corpus);
  make_dir(dir);
  save_dataset(d, dir);
  record_provenance(dir, "dataset", c, "synth",
                    {{"corpus_seed", c.corpus.seed},
                     {"manifest_hash", fnv1a_hex(read_file(dir / "manifest.json"))}});
  out << "train " << d.train.size() << "\ntest_A " << d.test_a.size() << "\ntest_B "
      << d.test_b.size() << "\ntest_mixed " << d.test_mixed.size() << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  const RunConfig c = load_run_config(f);
  std::vector<StageConfig> todo;
  if (f.stages.empty()) {
    todo = c.stages;
  } else {
    for (int n : f.stages) {
      auto it = std::find_if(c.stages.begin(), c.stages.end(),
                             [n](const StageConfig& s) { return s.stage == n; });
      if (it == c.stages.end()) throw ConfigError("stage " + std::to_string(n) + " is not configured");
      todo.push_back(*it);
    }
    std::sort(todo.begin(), todo.end(),
              [](const StageConfig& a, const StageConfig& b) { return a.stage < b.stage; });
  }
  if (todo.empty()) throw ConfigError("no stages to train");
  const Dataset d = load_checked_dataset(c);
  make_dir(c.paths.checkpoints);

  std::optional<Checkpoint> init;
  if (todo.front().stage > 1) {
    const fs::path prev = stage_checkpoint(c, todo.front().stage - 1);
    if (!fs::exists(prev))
      throw ConfigError("stage " + std::to_string(todo.front().stage) + " needs " + prev.string());
    init = load_checkpoint(prev);
  }
  int previous = todo.front().stage - 1;
  for (const StageConfig& s : todo) {
    if (s.stage != previous + 1)
      throw ConfigError("stage " + std::to_string(s.stage) + " needs stage " +
                        std::to_string(s.stage - 1) + " first");
    previous = s.stage;
    StageResult r = train_stage(d, c.model, s, init);
    const fs::path ckpt = stage_checkpoint(c, s.stage);
    const fs::path csv = c.paths.checkpoints / ("stage" + std::to_string(s.stage) + "_loss.csv");
    save_checkpoint(r.checkpoint, ckpt);
    write_loss_csv(r.training, s.train.log_every, csv);
    Json info = checkpoint_identity(ckpt);
    info["stage"] = to_json(s);
    if (init) {
      const std::vector<unsigned char> bytes = serialize_checkpoint(*init);
      info["init_hash"] = fnv1a_hex(std::string(bytes.begin(), bytes.end()));
    }
    record_provenance(c.paths.checkpoints, ckpt.filename().string(), c, "train", std::move(info));
    const double last = r.training.curve.empty() ? 0.0 : r.training.curve.back().loss;
    out << "stage " << s.stage << ": " << s.train.steps << " steps, final loss " << last << " -> "
        << ckpt.string() << "\n";
    init = std::move(r.checkpoint);
  }
  return kExitOk;
}

std::string report_name(const EvalReport& r) {
  return r.label + "_beam" + std::to_string(r.beam_width) + "_la" + r.look_ahead;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const RunConfig c = load_run_config(f);
  const Dataset d = load_checked_dataset(c);
  const DecodeOptions opts = decode_options(c);
  const fs::path dir = c.paths.output / "eval";

  std::optional<EvalReport> baseline;
  if (!f.compare.empty()) {
    try {
      baseline = eval_report_from_json(Json::parse(read_file(f.compare)));
    } catch (const Json::parse_error& e) {
      throw DataError(f.compare + ": " + e.what());
    }
  }

  struct Job {
    EvalReport report;
    Json source;
  };
  std::vector<Job> jobs;
  if (f.oracle) {
    const CombinedTable table = make_tables(d.config);
    EvalReport r = evaluate(d, oracle_transcriber(table, opts));
    r.label = "oracle";
    r.beam_width = opts.beam_width;
    r.look_ahead = "none";
    jobs.push_back({std::move(r), Json{{"oracle", true}}});
  } else {
    const fs::path path = default_checkpoint(c, f);
    const Checkpoint ckpt = load_checked_checkpoint(path);
    std::vector<std::optional<std::size_t>> sweep;
    for (const std::string& s : f.look_ahead) sweep.push_back(parse_look_ahead(s));
    if (sweep.empty()) sweep.push_back(c.look_ahead);
    for (const auto& la : sweep) {
      Model model = ckpt.to_model();
      if (la) model.set_look_ahead(*la);
      jobs.push_back({evaluate(model, d, opts), checkpoint_identity(path)});
    }
  }

  make_dir(dir);
  for (Job& j : jobs) {
    if (baseline) attach_werr(j.report, *baseline);
    const std::string name = report_name(j.report);
    write_file(dir / (name + ".json"), canonical_dump(to_json(j.report), 2) + "\n");
    write_file(dir / (name + ".csv"), to_csv(j.report));
    Json info{{"checkpoint", j.source}, {"beam_width", opts.beam_width},
              {"look_ahead", j.report.look_ahead}};
    if (baseline) info["baseline"] = {{"path", f.compare}, {"hash", fnv1a_hex(read_file(f.compare))}};
    record_provenance(dir, name, c, "eval", std::move(info));
    out << name << ":";
    for (const ConditionReport& r : j.report.conditions)
      out << " " << condition_name(r.condition) << " " << r.counts.rate();
    out << "\n";
  }
  return kExitOk;
}

Model load_decoding_model(const RunConfig& c, const Flags& f, fs::path& path) {
  path = default_checkpoint(c, f);
  Model model = load_checked_checkpoint(path).to_model();
  std::optional<std::size_t> la = c.look_ahead;
  if (!f.look_ahead.empty()) {
    if (f.look_ahead.size() > 1) throw ConfigError("give a single --look-ahead here");
    la = parse_look_ahead(f.look_ahead.front());
  }
  if (la) model.set_look_ahead(*la);
  return model;
}

int cmd_decode(const Flags& f, std::ostream& out) {
  const RunConfig c = load_run_config(f);
  const Dataset d = load_checked_dataset(c);
  const DecodeOptions opts = decode_options(c);
  fs::path path;
  const Model model = load_decoding_model(c, f, path);

  std::vector<const Utterance*> utts;
  if (c.utterances.empty()) {
    for (const Utterance& u : split_by_name(d, c.decode_split)) utts.push_back(&u);
  } else {
    for (const std::string& id : c.utterances) utts.push_back(&find_utterance(d, id));
  }

  std::string lines;
  for (const Utterance* u : utts) {
    const DecodeResult r =
        f.stream ? stream_decode(model, u->features, opts) : beam_search(model, u->features, opts);
    for (const Json& j : nbest_json(u->id, model.table(), r)) lines += j.dump() + "\n";
  }
  const fs::path dir = c.paths.output / "decode";
  make_dir(dir);
  const std::string name =
      (c.utterances.empty() ? c.decode_split : std::string("selected")) + ".nbest.jsonl";
  write_file(dir / name, lines);
  record_provenance(dir, name, c, "decode",
                    {{"checkpoint", checkpoint_identity(path)},
                     {"stream", f.stream},
                     {"beam_width", opts.beam_width},
                     {"look_ahead", look_ahead_string(model.look_ahead())}});
  out << utts.size() << " utterances -> " << (dir / name).string() << "\n";
  return kExitOk;
}

int cmd_analyze(const Flags& f, std::ostream& out) {
  const RunConfig c = load_run_config(f);
  const Dataset d = load_checked_dataset(c);
  const DecodeOptions opts = decode_options(c);
  fs::path path;
  const Model model = load_decoding_model(c, f, path);
  if (model.architecture() != Architecture::MultiSoftmaxAttn)
    throw ConfigError("analyze needs a multisoftmax_attn checkpoint");

  const fs::path dir = c.paths.output / "analysis";
  make_dir(dir);

  std::map<Condition, GmmFit> fits;
  Json summary = Json::object();
  for (Condition cond : {Condition::MonoA, Condition::MonoB, Condition::Mixed}) {
    const std::vector<double> pop = weight_population(model, d.test(cond));
    double mean = 0.0;
    for (double w : pop) mean += w;
    mean /= static_cast<double>(pop.size());
    const GmmFit fit = fit_gmm(pop, c.gmm_components,
                               derive_seed(c.seed, "gmm-" + std::string(condition_name(cond))));
    Json comps = Json::array();
    for (const GmmComponent& g : fit.components)
      comps.push_back({{"mean", g.mean}, {"variance", g.variance}, {"weight", g.weight}});
    summary[std::string(condition_name(cond))] = {{"frames", pop.size()},
                                                  {"mean_w_A", mean},
                                                  {"components", comps},
                                                  {"log_likelihood", fit.log_likelihood.back()},
                                                  {"iterations", fit.iterations}};
    out << condition_name(cond) << ": mean w_A " << mean << ", means";
    for (const GmmComponent& g : fit.components) out << " " << g.mean;
    out << "\n";
    fits.emplace(cond, fit);
  }
  write_gmm_csv(fits, dir / "gmm.csv");
  write_density_csv(fits, dir / "density.csv");
  write_file(dir / "populations.json", canonical_dump(summary, 2) + "\n");

  std::vector<std::string> ids = c.utterances;
  if (ids.empty())
    for (Condition cond : {Condition::MonoA, Condition::MonoB, Condition::Mixed})
      if (!d.test(cond).empty()) ids.push_back(d.test(cond).front().id);
  for (const std::string& id : ids) {
    const TrajectoryReport t = trajectory(model, find_utterance(d, id).features, opts);
    write_trajectory_csv(t, dir / ("trajectory_" + id + ".csv"));
  }
  record_provenance(dir, "analysis", c, "analyze",
                    {{"checkpoint", checkpoint_identity(path)},
                     {"look_ahead", look_ahead_string(model.look_ahead())},
                     {"gmm_components", c.gmm_components},
                     {"trajectories", ids}});
  out << ids.size() << " trajectories -> " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bilingual streaming transducer toolkit", "codemix"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CODEMIX_VERSION));
  Flags f;
  app.add_option("-c,--config", f.config, "Run config JSON (built-in defaults when omitted)");

  auto seed_opt = [&](CLI::App* sub, const std::string& help) {
    sub->add_option("--seed", f.seed, help);
  };
  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  synth->add_flag("--force", f.force, "Overwrite an existing dataset");
  seed_opt(synth, "Corpus seed");

  auto* train = app.add_subcommand("train", "Run curriculum stages");
  train->add_option("--stages", f.stages, "Stages to run, e.g. --stages 2 3")->check(CLI::Range(1, 3));
  seed_opt(train, "Root seed for the stage seeds");

  auto decoding = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint (default: last configured stage)");
    sub->add_option("--beam", f.beam, "Beam width")->check(CLI::PositiveNumber);
    seed_opt(sub, "Root seed");
  };
  auto* eval = app.add_subcommand("eval", "WER per test condition");
  decoding(eval);
  eval->add_option("--look-ahead", f.look_ahead, "Attention look-ahead (integer or inf); repeat to sweep");
  eval->add_option("--compare", f.compare, "Baseline report JSON for WERR");
  eval->add_flag("--oracle", f.oracle, "Score the label oracle instead of a checkpoint");

  auto* decode = app.add_subcommand("decode", "Write n-best JSON lines");
  decoding(decode);
  decode->add_option("--look-ahead", f.look_ahead, "Attention look-ahead (integer or inf)");
  decode->add_option("--split", f.split, "Split to decode");
  decode->add_option("--ids", f.ids, "Utterance ids (overrides --split)");
  decode->add_flag("--stream", f.stream, "Feed frames one at a time through a stream session");

  auto* analyze = app.add_subcommand("analyze", "Attention-weight trajectories and GMM fits");
  decoding(analyze);
  analyze->add_option("--look-ahead", f.look_ahead, "Attention look-ahead (integer or inf)");
  analyze->add_option("--ids", f.ids, "Utterances to export trajectories for");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(f, out);
    if (*train) return cmd_train(f, out);
    if (*eval) return cmd_eval(f, out);
    if (*decode) return cmd_decode(f, out);
    if (*analyze) return cmd_analyze(f, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Json::exception& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace codemix
