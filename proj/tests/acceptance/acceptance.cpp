// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [--cli path/to/scaleface] [--only N,...]

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scaleface/embeddings.hpp"
#include "scaleface/evaluation.hpp"
#include "scaleface/experiments.hpp"
#include "scaleface/gaussian_oracle.hpp"
#include "scaleface/gradcheck_suite.hpp"
#include "scaleface/losses.hpp"
#include "scaleface/scale_head.hpp"
#include "scaleface/similarity.hpp"

namespace fs = std::filesystem;
using namespace scaleface;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r) rng.unit_vector(m.row(r));
  return m;
}

// 1 -------------------------------------------------------------------------

Outcome reduction_identities() {
  double worst_sf = 0.0, worst_soft = 0.0;
  bool cosine_bitwise = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(mix_seed(seed, 900));
    const std::size_t n = 1 + rng.index(12), classes = 2 + rng.index(8), d = 2 + rng.index(30);
    const Matrix emb = unit_rows(n, d, rng);
    const CentroidMatrix cent{unit_rows(classes, d, rng), false};
    std::vector<Label> labels(n);
    for (auto& y : labels) y = static_cast<Label>(rng.index(classes));
    const double s = rng.uniform(0.5, 64.0), m = rng.uniform(0.0, 1.0);

    const std::vector<double> scales(n, s);
    const LossResult sf = scaleface_loss(emb, cent, labels, scales, m);
    const LossResult af = arcface_loss(emb, cent, labels, LossConfig{m, ScaleMode::fixed, s, 1e-7});
    worst_sf = std::max(worst_sf, std::abs(sf.loss - af.loss));
    for (std::size_t i = 0; i < n; ++i)
      worst_sf = std::max(worst_sf, std::abs(sf.per_sample[i] - af.per_sample[i]));

    const LossResult a0 = arcface_loss(emb, cent, labels, LossConfig{0.0, ScaleMode::fixed, 1.0, 1e-7});
    const LossResult sm = softmax_loss(emb, cent.centroids, labels);
    worst_soft = std::max(worst_soft, std::abs(a0.loss - sm.loss));
    for (std::size_t i = 0; i < n; ++i)
      worst_soft = std::max(worst_soft, std::abs(a0.per_sample[i] - sm.per_sample[i]));

    UnitEmbeddings u{emb, std::vector<double>(n, 1.0), labels, classes};
    PairSet pairs;
    for (std::size_t k = 0; k < 20; ++k) pairs.pairs.push_back({rng.index(n), rng.index(n), 0});
    const PairScores cos = cosine_pairs(u, pairs);
    const PairScores mod = modified_similarity(u, pairs, std::vector<double>(n, 1.0), 0.0);
    for (std::size_t k = 0; k < pairs.size(); ++k)
      cosine_bitwise = cosine_bitwise && std::bit_cast<std::uint64_t>(cos.scores[k]) ==
                                             std::bit_cast<std::uint64_t>(mod.scores[k]);
  }
  const bool pass = worst_sf <= 1e-12 && worst_soft <= 1e-12 && cosine_bitwise;
  return {pass, "max |scaleface-arcface| " + fmt("%.2e", worst_sf) + ", max |arcface(0,1)-softmax| " +
                    fmt("%.2e", worst_soft) + ", mu=0 similarity bitwise cosine: " +
                    (cosine_bitwise ? "yes" : "no")};
}

// 2 -------------------------------------------------------------------------

Outcome gradient_suite() {
  std::size_t total = 0, failed = 0;
  bool has_scale_grad = false;
  double worst = 0.0;
  std::string first_failure;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const GradCheckCase& c : run_gradcheck_suite({seed, 1e-4, 1e-4})) {
      ++total;
      worst = std::max(worst, c.report.max_relative_error);
      has_scale_grad = has_scale_grad || c.name.starts_with("scaleface_scales");
      if (!c.report.passed) {
        ++failed;
        if (first_failure.empty()) first_failure = c.name + " seed " + std::to_string(seed);
      }
    }
  }
  const bool pass = failed == 0 && total >= 20 && has_scale_grad;
  std::string detail = std::to_string(total - failed) + "/" + std::to_string(total) +
                       " configurations, max relative error " + fmt("%.2e", worst);
  if (!first_failure.empty()) detail += ", first failure " + first_failure;
  return {pass, detail};
}

// 3 -------------------------------------------------------------------------

Outcome gaussian_oracle() {
  const std::vector<double> scales{1, 2, 4, 8, 16, 32};
  const std::vector<double> thresholds{0.3, 0.6, 0.9};
  const std::uint64_t n = 1000000;
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::size_t matched = 0, points = 0;
  bool decreasing = true;
  double worst_z = 0.0;
  std::string worst_at;
  for (double a : thresholds) {
    const auto sweep = error_prob_sweep(scales, 1.0, a);
    for (std::size_t k = 1; k < sweep.size(); ++k)
      decreasing = decreasing && sweep[k].log_probability < sweep[k - 1].log_probability &&
                   sweep[k].probability <= sweep[k - 1].probability;
    for (std::size_t k = 0; k < scales.size(); ++k) {
      GaussianModelSpec spec;
      spec.dim = 128;
      spec.scale = scales[k];
      spec.sigma = 1.0;
      spec.threshold = a;
      const SimulationResult sim = simulate_error_prob(spec, n, 17 + points, threads);
      const double se = std::max(sim.standard_error, 1.0 / static_cast<double>(n));
      const double z = std::abs(sim.estimate - sweep[k].probability) / se;
      ++points;
      if (z <= 3.0) ++matched;
      if (z > worst_z) {
        worst_z = z;
        worst_at = "s=" + fmt("%g", scales[k]) + " a=" + fmt("%g", a) + " (sim " +
                   fmt("%.4g", sim.estimate) + " vs analytic " + fmt("%.4g", sweep[k].probability) + ")";
      }
    }
  }
  const bool pass = matched == points && decreasing;
  return {pass, std::to_string(matched) + "/" + std::to_string(points) +
                    " grid points within 3 SE, analytic strictly decreasing: " +
                    (decreasing ? "yes" : "no") + ", worst " + fmt("%.1f", worst_z) + " SE at " +
                    worst_at};
}

// 4 -------------------------------------------------------------------------

// Brute force over the candidate set: every negative, the lowest observed
// score, and the lowest observed score above every negative (or +inf).
TarResult tar_scan_oracle(const std::vector<double>& scores, const std::vector<int>& labels, double far) {
  std::vector<double> candidates;
  double lowest = std::numeric_limits<double>::infinity();
  double top_negative = -std::numeric_limits<double>::infinity();
  std::size_t npos = 0, nneg = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    lowest = std::min(lowest, scores[k]);
    if (labels[k] == 1) {
      ++npos;
    } else {
      ++nneg;
      candidates.push_back(scores[k]);
      top_negative = std::max(top_negative, scores[k]);
    }
  }
  candidates.push_back(lowest);
  double above = std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (s > top_negative) above = std::min(above, s);
  candidates.push_back(above);

  double best = std::numeric_limits<double>::infinity();
  for (double tau : candidates) {
    std::size_t accepted_neg = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) accepted_neg += labels[k] == 0 && scores[k] >= tau;
    if (static_cast<double>(accepted_neg) <= far * static_cast<double>(nneg)) best = std::min(best, tau);
  }
  std::size_t accepted_pos = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) accepted_pos += labels[k] == 1 && scores[k] >= best;
  return {static_cast<double>(accepted_pos) / static_cast<double>(npos), best};
}

Outcome tar_exactness() {
  std::size_t agree = 0;
  const std::size_t instances = 1000;
  for (std::uint64_t t = 0; t < instances; ++t) {
    Rng rng(mix_seed(t, 901));
    const std::size_t np = 1 + rng.index(50), nn = 1 + rng.index(50);
    // A third of the instances draw from a coarse lattice to force ties.
    const bool coarse = t % 3 == 0;
    std::vector<std::pair<double, int>> items;
    for (std::size_t k = 0; k < np + nn; ++k) {
      const double v = coarse ? static_cast<double>(rng.index(8)) / 8.0 : rng.uniform(-1.0, 1.0);
      items.emplace_back(k < np && !coarse ? v + 0.2 : v, k < np ? 1 : 0);
    }
    rng.shuffle(std::span<std::pair<double, int>>(items));
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& [s, y] : items) {
      scores.push_back(s);
      labels.push_back(y);
    }
    const double far_grid[] = {0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0};
    const double far = t % 2 ? far_grid[rng.index(7)] : rng.uniform(0.0, 1.0);
    const TarResult got = tar_at_far(scores, labels, far);
    const TarResult want = tar_scan_oracle(scores, labels, far);
    agree += got.tar == want.tar && got.threshold == want.threshold;
  }
  return {agree == instances, std::to_string(agree) + "/" + std::to_string(instances) +
                                  " instances equal to the exhaustive scan (TAR and threshold)"};
}

// 5 -------------------------------------------------------------------------

std::vector<double> read_uncertainty(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open " + path, ErrorKind::format);
  std::string line;
  std::getline(is, line);
  std::vector<double> out;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(std::stod(line.substr(line.find(',') + 1)));
  return out;
}

Outcome rejection_golden() {
  const std::string dir = SCALEFACE_FIXTURES;
  const ScoredPairs sp = read_scores(dir + "/reject4_scores.csv");
  const std::vector<double> u = read_uncertainty(dir + "/reject4_uncertainty.csv");
  const std::vector<double> grid{0.0, 0.5};
  const RejectionCurve c = reject_verification(sp.scores.scores, sp.pairs.labels(), u, 0.5, grid);
  const bool pass = c.tar.size() == 2 && c.tar[0] == 0.5 && c.tar[1] == 1.0 && c.auc_normalized == 0.75 &&
                    c.auc_raw == 0.375;
  return {pass, "curve (" + fmt("%.17g", c.tar.at(0)) + ", " + fmt("%.17g", c.tar.at(1)) +
                    "), unit AUC " + fmt("%.17g", c.auc_normalized) + ", raw AUC " +
                    fmt("%.17g", c.auc_raw)};
}

// 6 and 7 -------------------------------------------------------------------

struct VerificationRuns {
  std::vector<ExperimentReport> reports;
  double slowest = 0.0;
};

VerificationRuns run_verification() {
  VerificationRuns v;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    v.reports.push_back(exp_heteroscedastic_verification(seed));
    v.slowest = std::max(v.slowest, v.reports.back().wall_clock_seconds);
  }
  return v;
}

Outcome heteroscedastic(const VerificationRuns& v) {
  std::size_t ok = 0;
  std::string per_seed;
  for (const ExperimentReport& r : v.reports) {
    const auto& m = r.metrics;
    const double sc = m.at("auc_scale_far01"), rnd = m.at("auc_random_far01"), orc = m.at("auc_oracle_far01");
    const bool good = m.at("spearman_scale") >= 0.5 && orc >= sc && sc > rnd && sc - rnd >= 0.01;
    ok += good;
    per_seed += (per_seed.empty() ? "" : " ") + std::string(good ? "+" : "-");
  }
  const bool pass = ok >= 8 && v.slowest < 120.0;
  return {pass, std::to_string(ok) + "/10 seeds satisfy spearman >= 0.5 and oracle >= scale > random + 0.01 [" +
                    per_seed + "], slowest seed " + fmt("%.1f", v.slowest) + " s"};
}

Outcome mu_improvement(const VerificationRuns& v) {
  std::size_t above = 0, within = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (const ExperimentReport& r : v.reports) {
    const double diff = r.metrics.at("tar_mu_scaled_far05") - r.metrics.at("tar_cosine_far05");
    above += diff > 0.0;
    within += diff >= -0.005;
    worst = std::min(worst, diff);
  }
  const bool pass = within == 10 && above >= 8;
  return {pass, "mu-shifted TAR@0.05 above cosine on " + std::to_string(above) + "/10 seeds, within 0.005 on " +
                    std::to_string(within) + "/10, worst difference " + fmt("%+.4f", worst)};
}

// 8 -------------------------------------------------------------------------

Outcome crossview() {
  std::size_t above = 0, within = 0;
  double worst = std::numeric_limits<double>::infinity(), slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ExperimentReport r = exp_crossview_retrieval(seed);
    slowest = std::max(slowest, r.wall_clock_seconds);
    const double diff = r.metrics.at("prre_auc_mu_scaled") - r.metrics.at("prre_auc_cosine");
    above += diff > 0.0;
    within += diff >= -0.005;
    worst = std::min(worst, diff);
  }
  const bool pass = within == 10 && above >= 8 && slowest < 120.0;
  return {pass, "scaled Pr-Re AUC above cosine on " + std::to_string(above) + "/10 seeds, within 0.005 on " +
                    std::to_string(within) + "/10, worst difference " + fmt("%+.4f", worst) +
                    ", slowest seed " + fmt("%.1f", slowest) + " s"};
}

// 9 -------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every non-manifest file in a must exist in b with identical bytes.
bool same_outputs(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() == ".manifest") continue;
    ++files;
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  return files > 0;
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

struct CliRunner {
  std::string binary;
  fs::path root;
  std::vector<std::string> problems;

  bool run(const std::string& args, const fs::path& out, int threads) {
    const std::string cmd = quote(binary) + " " + args + " --threads " + std::to_string(threads) +
                            " --out-dir " + quote(out.string()) + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  }

  // Runs with 1 and 4 threads, then replays the first run's manifest with 2.
  void check(const std::string& name, const std::string& command, const std::string& args) {
    const fs::path a = root / (name + "_t1"), b = root / (name + "_t4"), c = root / (name + "_replay");
    if (!run(command + " " + args, a, 1) || !run(command + " " + args, b, 4)) {
      problems.push_back(name + ": command failed");
      return;
    }
    if (!run(command + " --config " + quote((a / (command + ".manifest")).string()), c, 2)) {
      problems.push_back(name + ": manifest replay failed");
      return;
    }
    if (!same_outputs(a, b)) problems.push_back(name + ": output depends on --threads");
    if (!same_outputs(a, c)) problems.push_back(name + ": manifest replay differs");
  }
};

std::string emb_bytes(const EmbeddingSet& set) {
  std::ostringstream os;
  write_embeddings(os, set);
  return os.str();
}

std::string head_bytes(const ScaleHead& head) {
  std::ostringstream os;
  write_head(os, head);
  return os.str();
}

Outcome determinism(const std::string& cli) {
  std::vector<std::string> problems;

  // In-process round trips.
  SyntheticSpec spec;
  spec.seed = 3;
  EmbeddingSet set = generate_synthetic(spec).set;
  for (double& v : set.vectors.values()) v = static_cast<float>(v);  // EMB1 stores f32
  {
    const std::string bytes = emb_bytes(set);
    std::istringstream is(bytes);
    const EmbeddingSet back = read_embeddings(is);
    if (!(back == set) || emb_bytes(back) != bytes) problems.push_back("EMB1 round trip is not exact");
  }
  for (std::size_t layers = 1; layers <= 4; ++layers) {
    ScaleHeadConfig hc;
    hc.hidden_layers = layers;
    hc.hidden_width = 16;
    hc.activation = ScaleActivation::shifted_sigm(32.0, 64.0);
    const ScaleHead head = make_scale_head(hc, 32, layers);
    const std::string bytes = head_bytes(head);
    std::istringstream is(bytes);
    const ScaleHead back = read_head(is);
    if (!(back == head) || head_bytes(back) != bytes) problems.push_back("SFH1 round trip is not exact");
  }

  if (cli.empty()) {
    problems.push_back("no --cli binary given");
  } else {
    char tmpl[] = "/tmp/scaleface_acceptance_XXXXXX";
    const char* made = mkdtemp(tmpl);
    if (!made) return {false, "cannot create a scratch directory"};
    CliRunner r{cli, made, {}};
    const std::string root = r.root.string();
    r.check("synth", "synth", "--d 32 --classes 10 --per-class 100 --seed 4");
    const std::string emb = quote(root + "/synth_t1/embeddings.emb");
    r.check("make-pairs", "make-pairs", "--embeddings " + emb + " --positives 400 --negatives 400 --seed 2");
    r.check("train-head", "train-head", "--embeddings " + emb + " --epochs 3 --width 32 --seed 6");
    const std::string head = quote(root + "/train-head_t1/head.sfh");
    const std::string pairs = quote(root + "/make-pairs_t1/pairs.csv");
    r.check("predict-scale", "predict-scale", "--embeddings " + emb + " --head " + head);
    r.check("calibrate-mu", "calibrate-mu", "--embeddings " + emb + " --pairs " + pairs);
    r.check("verify", "verify", "--embeddings " + emb + " --pairs " + pairs);
    r.check("verify-mu", "verify",
            "--embeddings " + emb + " --pairs " + pairs + " --head " + head + " --mode mu_scaled --mu 0.2");
    const std::string scores = quote(root + "/verify_t1/scores.csv");
    r.check("reject-curve", "reject-curve",
            "--scores " + scores + " --scales " + quote(root + "/predict-scale_t1/scales.csv"));
    r.check("reject-curve-norm", "reject-curve",
            "--scores " + scores + " --embeddings " + emb + " --source norm --far 0.1");
    r.check("simulate-gaussian", "simulate-gaussian", "--s 4 --a 0.6 --samples 200000 --seed 9");
    r.check("gradcheck", "gradcheck", "--seed 2");
    r.check("experiments-heteroscedastic", "experiments", "--scenario heteroscedastic --seed 2");
    r.check("experiments-mu", "experiments", "--scenario mu --seed 2");
    r.check("experiments-crossview", "experiments", "--scenario crossview --seed 2");
    problems.insert(problems.end(), r.problems.begin(), r.problems.end());
    std::error_code ec;
    fs::remove_all(r.root, ec);
  }
  if (problems.empty())
    return {true, "14 CLI invocations identical across --threads 1/4 and manifest replay; EMB1 and SFH1 "
                  "round trips exact"};
  std::string detail;
  for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  return {false, detail};
}

// 10 ------------------------------------------------------------------------

Outcome head_grid() {
  SyntheticSpec spec;
  spec.seed = 1;
  const UnitEmbeddings unit = normalize(generate_synthetic(spec).set);
  const std::vector<ScaleActivation> activations{
      ScaleActivation::exponential(),          ScaleActivation::sigm(32.0), ScaleActivation::sigm(64.0),
      ScaleActivation::shifted_sigm(32.0, 64.0), ScaleActivation::relu(1.0), ScaleActivation::relu(8.0)};
  std::size_t ok = 0, total = 0;
  std::string failures;
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    for (const ScaleActivation& act : activations) {
      ++total;
      ScaleHeadConfig hc;
      hc.hidden_layers = depth;
      hc.activation = act;
      TrainConfig tc;
      tc.seed = depth;
      bool good = false;
      try {
        const TrainReport r = train_head(unit, hc, 0.5, tc);
        good = std::isfinite(r.epoch_losses.back()) && r.epoch_losses.back() < r.epoch_losses.front();
      } catch (const Error&) {
      }
      ok += good;
      if (!good) failures += " " + std::to_string(depth) + "x" + act.name();
    }
  }
  std::string detail = std::to_string(ok) + "/" + std::to_string(total) +
                       " (depth, activation) configurations finish with a lower loss than epoch 1";
  if (!failures.empty()) detail += "; failing:" + failures;
  return {ok == total, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--cli PATH] [--only N,...]\n");
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  int failed = 0;
  auto report = [&](int n, const char* title, double budget, const std::function<Outcome()>& body) {
    if (!wanted(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget > 0.0 && secs >= budget) {
      o.pass = false;
      o.detail += ", over the " + fmt("%g", budget) + " s budget";
    }
    failed += !o.pass;
    std::printf("%s criterion %2d %-30s (%7.2f s) %s\n", o.pass ? "PASS" : "FAIL", n, title, secs,
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "reduction identities", 1.0, reduction_identities);
  report(2, "gradient suite", 30.0, gradient_suite);
  report(3, "gaussian oracle", 60.0, gaussian_oracle);
  report(4, "TAR@FAR exactness", 10.0, tar_exactness);
  report(5, "rejection golden fixture", 0.0, rejection_golden);
  if (wanted(6) || wanted(7)) {
    // Both criteria read the same ten heteroscedastic runs; per-seed budgets
    // are checked inside.
    VerificationRuns runs;
    std::string error;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      runs = run_verification();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto from_runs = [&](Outcome (*f)(const VerificationRuns&)) {
      return [&, f] { return error.empty() ? f(runs) : Outcome{false, "threw: " + error}; };
    };
    std::printf("     heteroscedastic runs for criteria 6 and 7 took %.1f s\n", secs);
    report(6, "heteroscedastic verification", 0.0, from_runs(heteroscedastic));
    report(7, "mu improvement", 0.0, from_runs(mu_improvement));
  }
  report(8, "cross-view retrieval", 0.0, crossview);
  report(9, "determinism and I/O", 0.0, [&] { return determinism(cli); });
  report(10, "head grid smoke test", 900.0, head_grid);

  std::printf("%s: %d criteria failed\n", failed ? "FAIL" : "PASS", failed);
  return failed ? 1 : 0;
}
