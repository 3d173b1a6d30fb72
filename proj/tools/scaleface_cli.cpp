// scaleface: command-line front end. Every command writes its outputs plus a
// key=value manifest (<command>.manifest) into --out-dir; passing that file
// back through --config reproduces the run.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scaleface/embeddings.hpp"
#include "scaleface/evaluation.hpp"
#include "scaleface/experiments.hpp"
#include "scaleface/gaussian_oracle.hpp"
#include "scaleface/gradcheck_suite.hpp"
#include "scaleface/scale_head.hpp"
#include "scaleface/similarity.hpp"

namespace fs = std::filesystem;
using namespace scaleface;

namespace {

constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kUsage = 2, kFormat = 3, kNumeric = 4 };

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string str(const std::string& v) { return v; }
std::string str(bool v) { return v ? "true" : "false"; }
std::string str(double v) { return num(v); }
template <typename T>
  requires std::is_integral_v<T>
std::string str(T v) { return std::to_string(v); }

/// A subcommand plus the resolved values of every option it exposes.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::pair<std::string, std::function<std::string()>>> fields;
  std::vector<std::string> outputs;

  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir = ".";
  std::string config;

  template <typename T>
  CLI::Option* opt(const std::string& name, T& var, const std::string& desc) {
    fields.emplace_back(name, [&var] { return str(var); });
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    fields.emplace_back(name, [&var] { return str(var); });
    return app->add_flag("--" + name, var, desc)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  void common() {
    opt("seed", seed, "random seed");
    opt("threads", threads, "worker threads (never changes outputs)")->check(CLI::Range(1u, 256u));
    opt("out-dir", out_dir, "output directory");
    app->add_option("--config", config, "key=value file; command-line flags override it");
  }

  std::string path(const std::string& file) {
    outputs.push_back(file);
    return (fs::path(out_dir) / file).string();
  }

  void write_manifest() {
    std::ofstream os(fs::path(out_dir) / (app->get_name() + ".manifest"), std::ios::binary);
    os << "# scaleface " << app->get_name() << " manifest\n# version=" << kVersion << '\n';
    for (const auto& out : outputs) os << "# output=" << out << '\n';
    for (const auto& [name, get] : fields) {
      const std::string value = get();
      if (!value.empty()) os << name << '=' << value << '\n';
    }
    if (!os) fail(ErrorKind::format, "cannot write manifest");
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) fail(ErrorKind::format, "cannot write " + path);
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& header) {
  auto is = detail::open_in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool seen = false;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (!seen) {
      if (line != header) fail(ErrorKind::format, path + ": expected header '" + header + "'");
      seen = true;
      continue;
    }
    rows.push_back(detail::split_csv(line));
  }
  if (!seen) fail(ErrorKind::format, path + ": empty file");
  return rows;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::logic_error&) {
  }
  fail(ErrorKind::format, where + ": bad number '" + s + "'");
}

/// Column `col` of an indexed CSV (first column 0..n-1 in order).
std::vector<double> read_indexed_column(const std::string& path, const std::string& header,
                                        std::size_t col) {
  std::vector<double> out;
  for (const auto& row : read_csv(path, header)) {
    if (row.size() <= col) fail(ErrorKind::format, path + ": short row");
    if (row[0] != std::to_string(out.size())) fail(ErrorKind::format, path + ": indices must run 0..n-1");
    out.push_back(parse_double(row[col], path));
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) return default_rejection_grid();
  std::vector<double> grid;
  for (const auto& part : detail::split_csv(text)) grid.push_back(parse_double(part, "--grid"));
  return grid;
}

// ---- synth ----
struct SynthArgs {
  std::size_t d = 32, classes = 10, per_class = 200;
  double sigma = 1.0, smin = 1.0, smax = 10.0;
};

int run_synth(Command& c, const SynthArgs& a) {
  SyntheticSpec spec{a.d, a.classes, a.per_class, a.smin, a.smax, a.sigma, c.seed};
  const SyntheticData data = generate_synthetic(spec);
  write_embeddings(c.path("embeddings.emb"), data.set);
  std::ostringstream truth;
  truth << "index,true_scale,label\n";
  for (std::size_t i = 0; i < data.set.size(); ++i)
    truth << i << ',' << num(data.true_scales[i]) << ',' << data.set.labels[i] << '\n';
  write_text(c.path("truth.csv"), truth.str());
  c.write_manifest();
  std::cout << "rows=" << data.set.size() << '\n';
  return kOk;
}

// ---- make-pairs ----
struct PairsArgs {
  std::string embeddings;
  std::size_t positives = 5000, negatives = 5000;
};

int run_make_pairs(Command& c, const PairsArgs& a) {
  const EmbeddingSet set = read_embeddings(a.embeddings);
  const PairSet pairs = make_pairs(set.labels, a.positives, a.negatives, c.seed);
  write_pairs(c.path("pairs.csv"), pairs);
  c.write_manifest();
  std::cout << "pairs=" << pairs.size() << '\n';
  return kOk;
}

// ---- train-head ----
struct TrainArgs {
  std::string embeddings;
  std::size_t layers = 2, width = 128, epochs = 30, batch_size = 64;
  std::string activation = "sigm:64";
  double margin = 0.5, lr = 1e-3;
  bool freeze_centroids = false, shuffle = true;
};

int run_train_head(Command& c, const TrainArgs& a) {
  const UnitEmbeddings unit = normalize(read_embeddings(a.embeddings));
  ScaleHeadConfig hc{a.layers, a.width, ScaleActivation::parse(a.activation)};
  TrainConfig tc{a.epochs, a.batch_size, a.lr, c.seed, a.freeze_centroids, a.shuffle};
  const TrainReport r = train_head(unit, hc, a.margin, tc);
  write_head(c.path("head.sfh"), r.head);
  EmbeddingSet cents;
  cents.vectors = r.centroids.centroids;
  cents.classes = r.centroids.classes();
  for (std::size_t j = 0; j < cents.classes; ++j) cents.labels.push_back(static_cast<Label>(j));
  write_embeddings(c.path("centroids.emb"), cents);
  std::ostringstream loss;
  loss << "epoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) loss << e + 1 << ',' << num(r.epoch_losses[e]) << '\n';
  write_text(c.path("train_loss.csv"), loss.str());
  c.write_manifest();
  if (!r.epoch_losses.empty())
    std::cout << "loss_first=" << num(r.epoch_losses.front()) << " loss_last=" << num(r.epoch_losses.back())
              << '\n';
  return kOk;
}

// ---- predict-scale ----
struct PredictArgs {
  std::string embeddings, head;
};

int run_predict(Command& c, const PredictArgs& a) {
  const UnitEmbeddings unit = normalize(read_embeddings(a.embeddings));
  const ScaleHead head = read_head(a.head);
  const ScalePrediction p = predict_scales(head, unit.unit);
  std::vector<std::size_t> rank(p.scales.size());
  for (std::size_t r = 0; r < p.ranking.size(); ++r) rank[p.ranking[r]] = r + 1;
  std::ostringstream os;
  os << "index,scale,rank\n";
  for (std::size_t i = 0; i < p.scales.size(); ++i) os << i << ',' << num(p.scales[i]) << ',' << rank[i] << '\n';
  write_text(c.path("scales.csv"), os.str());
  c.write_manifest();
  return kOk;
}

// ---- calibrate-mu ----
struct MuArgs {
  std::string scores, embeddings, pairs;
};

int run_calibrate_mu(Command& c, const MuArgs& a) {
  double mu = 0.0;
  if (!a.scores.empty()) {
    const ScoredPairs sp = read_scores(a.scores);
    mu = calibrate_mu(sp.scores.scores, sp.pairs.labels());
  } else {
    require(!a.embeddings.empty() && !a.pairs.empty(), "calibrate-mu needs --scores or --embeddings with --pairs");
    const UnitEmbeddings unit = normalize(read_embeddings(a.embeddings));
    const PairSet pairs = read_pairs(a.pairs);
    pairs.validate(unit.size());
    mu = calibrate_mu(cosine_pairs(unit, pairs).scores, pairs.labels());
  }
  const std::string line = "mu=" + num(mu) + "\n";
  write_text(c.path("mu.txt"), line);
  c.write_manifest();
  std::cout << line;
  return kOk;
}

// ---- verify ----
struct VerifyArgs {
  std::string embeddings, pairs, head, mode = "cosine";
  double mu = 0.0, far = 0.05;
};

int run_verify(Command& c, const VerifyArgs& a) {
  const UnitEmbeddings unit = normalize(read_embeddings(a.embeddings));
  const PairSet pairs = read_pairs(a.pairs);
  pairs.validate(unit.size());
  PairScores scores;
  if (a.mode == "cosine") {
    scores = cosine_pairs(unit, pairs);
  } else {
    require(!a.head.empty(), "--mode " + a.mode + " needs --head");
    const auto s = head_forward(read_head(a.head), unit.unit);
    scores = modified_similarity(unit, pairs, s, a.mode == "mu_scaled" ? a.mu : 0.0);
  }
  write_scores(c.path("scores.csv"), pairs, scores);
  const TarResult t = tar_at_far(scores.scores, pairs.labels(), a.far);
  const std::string text = "far=" + num(a.far) + "\ntar=" + num(t.tar) + "\nthreshold=" + num(t.threshold) + "\n";
  write_text(c.path("verify.txt"), text);
  c.write_manifest();
  std::cout << text;
  return kOk;
}

// ---- reject-curve ----
struct RejectArgs {
  std::string scores, uncertainty, scales, embeddings, source = "scale", grid, normalization = "unit";
  double far = 0.05;
};

int run_reject(Command& c, const RejectArgs& a) {
  const ScoredPairs sp = read_scores(a.scores);
  const std::vector<int> labels = sp.pairs.labels();
  UncertaintySource source;
  if (a.source == "scale") source = UncertaintySource::scale;
  else if (a.source == "norm") source = UncertaintySource::norm;
  else if (a.source == "random") source = UncertaintySource::random;
  else source = UncertaintySource::oracle;

  std::vector<double> u;
  if (!a.uncertainty.empty()) {
    u = read_indexed_column(a.uncertainty, "index,uncertainty", 1);
  } else if (source == UncertaintySource::scale) {
    require(!a.scales.empty(), "--source scale needs --scales or --uncertainty");
    const auto s = read_indexed_column(a.scales, "index,scale,rank", 1);
    u = pair_uncertainty(scale_uncertainty(s), sp.pairs, source).values;
  } else if (source == UncertaintySource::norm) {
    require(!a.embeddings.empty(), "--source norm needs --embeddings");
    const UnitEmbeddings unit = normalize(read_embeddings(a.embeddings));
    u = pair_uncertainty(scale_uncertainty(norm_confidence(unit)), sp.pairs, source).values;
  } else if (source == UncertaintySource::random) {
    u = random_confidence(sp.pairs.size(), c.seed);
  } else {
    u = oracle_uncertainty(sp.scores.scores, labels, a.far);
  }
  require(u.size() == sp.pairs.size(), "uncertainty count does not match the number of scored pairs");

  const auto grid = parse_grid(a.grid);
  const auto mode = a.normalization == "none" ? AucNormalization::none : AucNormalization::unit;
  const RejectionCurve curve = reject_verification(sp.scores.scores, labels, u, a.far, grid, mode);
  {
    std::ostringstream os;
    os << "rejection_rate,tar\n";
    for (std::size_t k = 0; k < curve.grid.size(); ++k) os << num(curve.grid[k]) << ',' << num(curve.tar[k]) << '\n';
    write_text(c.path("curve.csv"), os.str());
  }
  nlohmann::ordered_json j;
  j["far"] = a.far;
  j["auc_raw"] = curve.auc_raw;
  j["auc_normalized"] = curve.auc_normalized;
  j["normalization"] = a.normalization;
  j["provenance"] = to_string(source);
  j["grid"] = curve.grid;
  j["tar"] = curve.tar;
  write_json(c.path("summary.json"), j);
  c.write_manifest();
  std::cout << "auc_raw=" << num(curve.auc_raw) << " auc_normalized=" << num(curve.auc_normalized) << '\n';
  return kOk;
}

// ---- simulate-gaussian ----
struct GaussArgs {
  std::size_t d = 128;
  double s = 10.0, sigma = 1.0, a = 0.9;
  std::uint64_t samples = 1000000;
  std::string method = "projected";
};

int run_gauss(Command& c, const GaussArgs& g) {
  GaussianModelSpec spec;
  spec.dim = g.d;
  spec.scale = g.s;
  spec.sigma = g.sigma;
  spec.threshold = g.a;
  spec.direction_seed = c.seed;
  const SimulationResult sim = simulate_error_prob(
      spec, g.samples, c.seed, c.threads,
      g.method == "full" ? SimulationMethod::full_vector : SimulationMethod::projected);
  nlohmann::ordered_json j;
  j["d"] = g.d;
  j["s"] = g.s;
  j["sigma"] = g.sigma;
  j["a"] = g.a;
  j["samples"] = g.samples;
  j["method"] = g.method;
  j["seed"] = c.seed;
  j["estimate"] = sim.estimate;
  j["standard_error"] = sim.standard_error;
  if (g.sigma > 0.0 && g.a <= 1.0) {
    const ErrorProbability an = analytic_error_prob(g.s, g.sigma, g.a);
    j["analytic"] = an.probability;
    j["log_analytic"] = an.log_probability;
  } else {
    j["analytic"] = 0.0;
    j["noiseless_limit"] = true;
  }
  write_json(c.path("gaussian.json"), j);
  c.write_manifest();
  std::cout << "estimate=" << num(sim.estimate) << " standard_error=" << num(sim.standard_error)
            << " analytic=" << num(j["analytic"].get<double>()) << '\n';
  return kOk;
}

// ---- gradcheck ----
struct GradArgs {
  double tolerance = 1e-4, step = 1e-4;
};

int run_gradcheck(Command& c, const GradArgs& g) {
  const auto cases = run_gradcheck_suite({c.seed, g.tolerance, g.step});
  std::ostringstream os;
  os << "case,max_relative_error,passed\n";
  bool ok = true;
  for (const auto& k : cases) {
    os << k.name << ',' << num(k.report.max_relative_error) << ',' << (k.report.passed ? 1 : 0) << '\n';
    ok = ok && k.report.passed;
    if (!k.report.passed)
      std::cerr << "gradient mismatch in " << k.name << ": " << num(k.report.max_relative_error) << '\n';
  }
  write_text(c.path("gradcheck.csv"), os.str());
  c.write_manifest();
  std::cout << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kOk : kNumeric;
}

// ---- experiments ----
struct ExpArgs {
  std::string scenario = "heteroscedastic";
};

int run_experiments(Command& c, const ExpArgs& e) {
  ExperimentReport r;
  if (e.scenario == "heteroscedastic") r = exp_heteroscedastic_verification(c.seed);
  else if (e.scenario == "mu") r = exp_mu_improvement(c.seed);
  else r = exp_crossview_retrieval(c.seed);
  nlohmann::ordered_json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["metrics"] = r.metrics;
  write_json(c.path("report.json"), j);
  c.write_manifest();
  for (const auto& [k, v] : r.metrics) std::cout << k << '=' << num(v) << '\n';
  std::cout << "wall_clock_seconds=" << num(r.wall_clock_seconds) << '\n';
  return kOk;
}

/// Moves the lines of any --config file in front of the real arguments, so
/// the TakeLast policy lets explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.empty()) return args;
  std::ifstream is(config);
  if (!is) fail(ErrorKind::format, "cannot open config file " + config);
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(is, line)) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::format, config + ": expected key=value, got '" + line + "'");
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!value.empty()) injected.push_back("--" + detail::trim(line.substr(0, eq)) + "=" + value);
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ScaleFace uncertainty-aware metric learning toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", kVersion);

  std::vector<std::unique_ptr<Command>> commands;
  auto command = [&](const std::string& name, const std::string& desc) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, desc);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };
  std::function<int()> action;

  SynthArgs synth;
  {
    Command& c = command("synth", "sample Gaussian-model embeddings");
    c.opt("d", synth.d, "embedding dimension");
    c.opt("classes", synth.classes, "number of classes");
    c.opt("per-class", synth.per_class, "samples per class");
    c.opt("sigma", synth.sigma, "noise standard deviation");
    c.opt("smin", synth.smin, "smallest signal scale");
    c.opt("smax", synth.smax, "largest signal scale");
    c.common();
    c.app->callback([&] { action = [&] { return run_synth(c, synth); }; });
  }
  PairsArgs pairs;
  {
    Command& c = command("make-pairs", "draw positive and negative verification pairs");
    c.opt("embeddings", pairs.embeddings, "EMB1 file")->required();
    c.opt("positives", pairs.positives, "number of same-class pairs");
    c.opt("negatives", pairs.negatives, "number of different-class pairs");
    c.common();
    c.app->callback([&] { action = [&] { return run_make_pairs(c, pairs); }; });
  }
  TrainArgs train;
  {
    Command& c = command("train-head", "train a scale head on frozen embeddings");
    c.opt("embeddings", train.embeddings, "EMB1 training file")->required();
    c.opt("layers", train.layers, "hidden layers (1..4)");
    c.opt("width", train.width, "hidden width");
    c.opt("activation", train.activation, "exp | sigm:C | shifted_sigm:LO:HI | relu:C");
    c.opt("margin", train.margin, "angular margin in radians");
    c.opt("epochs", train.epochs, "training epochs");
    c.opt("batch-size", train.batch_size, "mini-batch size");
    c.opt("lr", train.lr, "Adam learning rate");
    c.flag("freeze-centroids", train.freeze_centroids, "keep class centroids fixed");
    c.opt("shuffle", train.shuffle, "shuffle every epoch (true/false)");
    c.common();
    c.app->callback([&] { action = [&] { return run_train_head(c, train); }; });
  }
  PredictArgs predict;
  {
    Command& c = command("predict-scale", "predict per-sample scales with a trained head");
    c.opt("embeddings", predict.embeddings, "EMB1 file")->required();
    c.opt("head", predict.head, "SFH1 head file")->required();
    c.common();
    c.app->callback([&] { action = [&] { return run_predict(c, predict); }; });
  }
  MuArgs mu;
  {
    Command& c = command("calibrate-mu", "class-separating shift from labelled pairs");
    c.opt("scores", mu.scores, "scores file (index_a,index_b,label,score)");
    c.opt("embeddings", mu.embeddings, "EMB1 file (with --pairs)");
    c.opt("pairs", mu.pairs, "pairs file (with --embeddings)");
    c.common();
    c.app->callback([&] { action = [&] { return run_calibrate_mu(c, mu); }; });
  }
  VerifyArgs verify;
  {
    Command& c = command("verify", "score pairs and report TAR at a FAR");
    c.opt("embeddings", verify.embeddings, "EMB1 file")->required();
    c.opt("pairs", verify.pairs, "pairs file")->required();
    c.opt("mode", verify.mode, "cosine | scaled | mu_scaled")
        ->check(CLI::IsMember({"cosine", "scaled", "mu_scaled"}));
    c.opt("head", verify.head, "SFH1 head file for scaled modes");
    c.opt("mu", verify.mu, "shift for mu_scaled");
    c.opt("far", verify.far, "false acceptance rate");
    c.common();
    c.app->callback([&] { action = [&] { return run_verify(c, verify); }; });
  }
  RejectArgs reject;
  {
    Command& c = command("reject-curve", "TAR@FAR after rejecting the most uncertain pairs");
    c.opt("scores", reject.scores, "scores file")->required();
    c.opt("uncertainty", reject.uncertainty, "per-pair file (index,uncertainty)");
    c.opt("scales", reject.scales, "per-image scales file (index,scale,rank)");
    c.opt("embeddings", reject.embeddings, "EMB1 file for --source norm");
    c.opt("source", reject.source, "scale | norm | random | oracle")
        ->check(CLI::IsMember({"scale", "norm", "random", "oracle"}));
    c.opt("far", reject.far, "false acceptance rate");
    c.opt("grid", reject.grid, "comma-separated rejection shares (default 0,0.02,...,0.5)");
    c.opt("normalization", reject.normalization, "unit | none")->check(CLI::IsMember({"unit", "none"}));
    c.common();
    c.app->callback([&] { action = [&] { return run_reject(c, reject); }; });
  }
  GaussArgs gauss;
  {
    Command& c = command("simulate-gaussian", "Monte-Carlo vs closed-form error probability");
    c.opt("d", gauss.d, "dimension");
    c.opt("s", gauss.s, "signal scale");
    c.opt("sigma", gauss.sigma, "noise standard deviation");
    c.opt("a", gauss.a, "cosine threshold");
    c.opt("samples", gauss.samples, "Monte-Carlo samples");
    c.opt("method", gauss.method, "projected (two sufficient statistics) | full (every coordinate)")
        ->check(CLI::IsMember({"projected", "full"}));
    c.common();
    c.app->callback([&] { action = [&] { return run_gauss(c, gauss); }; });
  }
  GradArgs grad;
  {
    Command& c = command("gradcheck", "finite-difference check of every analytic gradient");
    c.opt("tolerance", grad.tolerance, "largest accepted relative error");
    c.opt("step", grad.step, "central-difference step");
    c.common();
    c.app->callback([&] { action = [&] { return run_gradcheck(c, grad); }; });
  }
  ExpArgs exp;
  {
    Command& c = command("experiments", "run a synthetic end-to-end scenario");
    c.opt("scenario", exp.scenario, "heteroscedastic | mu | crossview")
        ->check(CLI::IsMember({"heteroscedastic", "mu", "crossview"}));
    c.common();
    c.app->callback([&] { action = [&] { return run_experiments(c, exp); }; });
  }

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::numeric ? kNumeric : e.kind() == ErrorKind::format ? kFormat : kUsage;
  }

  try {
    for (const auto& c : commands)
      if (c->app->parsed()) fs::create_directories(c->out_dir);
    return action();
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::invalid_argument:
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
      case ErrorKind::format:
        std::cerr << "format error: " << e.what() << '\n';
        return kFormat;
      case ErrorKind::numeric:
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  }
  return kUsage;
}
