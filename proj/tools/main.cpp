#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sigguard/experiment.hpp"
#include "sigguard/idx.hpp"
#include "sigguard/model_io.hpp"

namespace fs = std::filesystem;
using namespace sigguard;

namespace {

Dataset load_cli_dataset(const std::string& kind, const std::string& mnist_dir, int n_samples,
                         int input_dim, std::uint64_t data_seed, std::size_t limit,
                         int output_dim, bool test_split) {
  if (kind == "random") {
    return make_random_dataset(n_samples, input_dim, data_seed);
  }
  if (kind != "mnist") throw std::runtime_error("unknown dataset kind: " + kind);
  const fs::path dir = mnist_dir;
  const fs::path images = dir / (test_split ? "t10k-images-idx3-ubyte" : "train-images-idx3-ubyte");
  const fs::path labels = dir / (test_split ? "t10k-labels-idx1-ubyte" : "train-labels-idx1-ubyte");
  const MnistTargets targets =
      output_dim == 1 ? MnistTargets::kScalarDigit : MnistTargets::kOneHot10;
  return load_mnist(images, labels, limit ? std::optional<std::size_t>(limit) : std::nullopt,
                    targets);
}

int run_train(const std::string& name, const std::string& mnist_dir, int n_samples,
              std::uint64_t data_seed, std::size_t limit, std::uint64_t seed, int epochs,
              int batch, double lr, double lambda, const std::string& scope,
              const std::string& pair_mode, double pair_fraction, bool include_biases,
              const std::string& out) {
  const auto parsed = parse_model_name(name);
  const auto arch = parsed.architecture;
  const std::string kind = parsed.kind == DatasetKind::kMnist ? "mnist" : "random";
  Dataset ds = load_cli_dataset(kind, mnist_dir, n_samples, arch.input_dim(), data_seed, limit,
                                arch.output_dim(), /*test_split=*/false);

  TrainingConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.learning_rate = lr;
  cfg.seed = seed;
  if (lambda > 0.0) {
    DefenseConfig defense;
    defense.lambda_similarity = lambda;
    defense.layer_scope = layer_scope_from_string(scope);
    defense.pair_mode = pair_mode_from_string(pair_mode);
    defense.pair_fraction = pair_fraction;
    defense.include_biases = include_biases;
    cfg.defense = defense;
  }
  MLPModel model = train(arch, ds, cfg);
  model.metadata["model_id"] = name;
  save_model(model, out);
  std::cout << "trained " << name << " (seed " << seed << ", lambda " << lambda << ") -> " << out
            << "\n";
  try {
    Dataset test = load_cli_dataset(kind, mnist_dir, n_samples, arch.input_dim(), data_seed,
                                    limit, arch.output_dim(), /*test_split=*/true);
    std::cout << "test accuracy: " << accuracy(model, test) << "\n";
  } catch (const std::exception&) {
    // no test split / regression data; nothing to report
  }
  return 0;
}

int run_attack(const std::string& model_path, std::uint64_t seed, std::uint64_t budget_queries,
               double budget_seconds, double epsilon, int lines, double cluster_tol,
               double refine_tol, double box_low, double box_high, bool use_box,
               const std::string& out, bool score) {
  const MLPModel model = load_model(model_path);
  AttackConfig cfg;
  cfg.seed = seed;
  cfg.epsilon = epsilon;
  cfg.line_count_per_round = lines;
  cfg.cluster_tolerance = cluster_tol;
  cfg.refine_tolerance = refine_tol;
  if (use_box) {
    cfg.search_box.assign(model.architecture.input_dim(), {box_low, box_high});
  }
  if (budget_queries > 0) cfg.budget.max_queries = budget_queries;
  if (budget_seconds > 0) cfg.budget.max_wall_seconds = budget_seconds;
  if (!cfg.budget.any_finite()) {
    std::cerr << "attack needs --budget-queries or --budget-seconds\n";
    return 1;
  }
  Oracle oracle(model, 0, cfg.budget);
  AttackReport report = run_layer1_attack(oracle, model.architecture.layer_sizes[1], cfg);
  if (score) {
    const auto metrics = evaluate_against_ground_truth(report, model, 1e-4);
    std::cout << "white-box score: faithful=" << (metrics.faithful ? "yes" : "no")
              << " max_error=" << metrics.max_error << "\n";
  }
  std::cout << "verdict: "
            << (report.verdict == Verdict::kSuccess ? "Success"
                                                    : "Failure(" + report.failure_reason + ")")
            << " clusters=" << report.clusters_found << "/" << report.target_neuron_count
            << " queries=" << report.stats.queries_used << "\n";
  if (!out.empty()) save_attack_report(report, out);
  return 0;
}

int run_prob(const std::string& model_path, int layer, double low, double high,
             const std::string& out, const std::string& csv) {
  const MLPModel model = load_model(model_path);
  const InputRange range(low, high, model.weights[layer].cols);
  const auto report = model_attack_probability(model, layer, range);
  std::cout << "worst-case pair probability: " << report.worst_case << " (pair " << report.worst_i
            << "," << report.worst_j << ")\n";
  if (!out.empty()) {
    std::ofstream f(out);
    f << probability_report_to_json(report) << '\n';
  }
  if (!csv.empty()) {
    std::ofstream f(csv);
    f << probability_report_to_csv(report);
  }
  return 0;
}

int run_stats(const std::string& model_path, int layer, int bins, double bin_low, double bin_high,
              const std::string& out) {
  const MLPModel model = load_model(model_path);
  const auto stats = weight_stats(model, layer, bins, bin_low, bin_high);
  std::cout << "layer " << layer << " weight variance: " << stats.variance
            << ", mean pairwise squared row distance: " << stats.mean_pairwise_sq_row_distance
            << "\n";
  if (!out.empty()) {
    std::ofstream f(out);
    f << "bin_low,bin_high,count\n";
    const double width = (stats.bin_high - stats.bin_low) / static_cast<double>(bins);
    for (int b = 0; b < bins; ++b) {
      f << stats.bin_low + b * width << ',' << stats.bin_low + (b + 1) * width << ','
        << stats.histogram[b] << '\n';
    }
  }
  return 0;
}

int run_experiment_cmd(const std::string& config_path, const std::string& mnist_dir,
                       const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "cannot open config: " << config_path << "\n";
    return 1;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig config = experiment_config_from_json(buf.str());
  if (!mnist_dir.empty()) config.dataset.mnist_dir = mnist_dir;
  if (!out_dir.empty()) config.out_dir = out_dir;
  const auto result = run_experiment(config);
  std::cout << result_table_csv(result.rows);
  std::cout << "table: " << result.table_csv << "\nreport: " << result.report_json << "\n";
  return 0;
}

int run_report(const std::string& dir) {
  const fs::path table = fs::path(dir) / "table.csv";
  std::ifstream in(table);
  if (!in) {
    std::cerr << "no table.csv under " << dir << "\n";
    return 1;
  }
  std::cout << in.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"extraction-aware training and signature-extraction workbench"};
  app.require_subcommand(1);

  // train
  std::string name, mnist_dir, out = "model.json", scope = "first-layer", pair_mode = "all-pairs";
  int n_samples = 1000, epochs = 10, batch = 64;
  std::uint64_t data_seed = 0, seed = 42;
  std::size_t limit = 0;
  double lr = 1e-3, lambda = 0.0, pair_fraction = 1.0;
  bool include_biases = false;
  auto* train_cmd = app.add_subcommand("train", "train a baseline or defended model");
  train_cmd->add_option("--name", name, "model id, e.g. MNIST784-8x2-1 or Random16-4x1-1")
      ->required();
  train_cmd->add_option("--mnist-dir", mnist_dir, "directory with MNIST IDX files");
  train_cmd->add_option("--samples", n_samples, "sample count for random data");
  train_cmd->add_option("--data-seed", data_seed, "random-data seed");
  train_cmd->add_option("--limit", limit, "limit on loaded MNIST samples");
  train_cmd->add_option("--seed", seed, "training seed");
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch", batch);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--lambda", lambda, "similarity regularizer strength");
  train_cmd->add_option("--layer-scope", scope, "first-layer | all-layers");
  train_cmd->add_option("--pair-mode", pair_mode, "all-pairs | chain");
  train_cmd->add_option("--pair-fraction", pair_fraction);
  train_cmd->add_flag("--include-biases", include_biases);
  train_cmd->add_option("--out", out, "output model path");

  // attack
  std::string model_path, attack_out;
  std::uint64_t budget_queries = 0, attack_seed = 0;
  double budget_seconds = 0, epsilon = 0, cluster_tol = 1e-5, refine_tol = 1e-8;
  double box_low = 0.0, box_high = 1.0;
  bool score = false;
  int lines = 16;
  auto* attack_cmd = app.add_subcommand("attack", "run the black-box signature attack");
  attack_cmd->add_option("--model", model_path)->required();
  attack_cmd->add_option("--seed", attack_seed, "extraction seed");
  attack_cmd->add_option("--budget-queries", budget_queries);
  attack_cmd->add_option("--budget-seconds", budget_seconds);
  attack_cmd->add_option("--epsilon", epsilon, "probe step (0 = auto)");
  attack_cmd->add_option("--lines", lines, "segments per round");
  attack_cmd->add_option("--cluster-tol", cluster_tol);
  attack_cmd->add_option("--refine-tol", refine_tol);
  auto* bl = attack_cmd->add_option("--box-low", box_low, "search box lower bound (all dims)");
  auto* bh = attack_cmd->add_option("--box-high", box_high, "search box upper bound (all dims)");
  bl->needs(bh);
  bh->needs(bl);
  attack_cmd->add_flag("--score", score, "white-box scoring against the target model");
  attack_cmd->add_option("--out", attack_out, "attack report path");

  // prob
  std::string prob_model, prob_out, prob_csv;
  int prob_layer = 0;
  double prob_low = -1.0, prob_high = 1.0;
  auto* prob_cmd = app.add_subcommand("prob", "pairwise attack-success probability report");
  prob_cmd->add_option("--model", prob_model)->required();
  prob_cmd->add_option("--layer", prob_layer);
  prob_cmd->add_option("--low", prob_low);
  prob_cmd->add_option("--high", prob_high);
  prob_cmd->add_option("--out", prob_out, "JSON output path");
  prob_cmd->add_option("--csv", prob_csv, "CSV output path");

  // stats
  std::string stats_model, stats_out;
  int stats_layer = 0, bins = 60;
  double bin_low = -1.5, bin_high = 1.5;
  auto* stats_cmd = app.add_subcommand("stats", "weight variance and histogram");
  stats_cmd->add_option("--model", stats_model)->required();
  stats_cmd->add_option("--layer", stats_layer);
  stats_cmd->add_option("--bins", bins);
  stats_cmd->add_option("--bin-low", bin_low);
  stats_cmd->add_option("--bin-high", bin_high);
  stats_cmd->add_option("--out", stats_out, "histogram CSV path");

  // experiment
  std::string config_path, exp_mnist_dir, exp_out;
  auto* exp_cmd = app.add_subcommand("experiment", "full baseline/secure table run");
  exp_cmd->add_option("--config", config_path)->required();
  exp_cmd->add_option("--mnist-dir", exp_mnist_dir, "override dataset.mnist_dir");
  exp_cmd->add_option("--out", exp_out, "override out_dir");

  // report
  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "print the table of a finished experiment");
  report_cmd->add_option("--dir", report_dir)->required();

  // synth-data (stand-in corpus for environments without the real files)
  std::string synth_dir;
  int synth_train = 20000, synth_test = 5000;
  std::uint64_t synth_seed = 7;
  auto* synth_cmd =
      app.add_subcommand("synth-data", "write a synthetic 10-class IDX corpus (MNIST layout)");
  synth_cmd->add_option("--dir", synth_dir)->required();
  synth_cmd->add_option("--train", synth_train);
  synth_cmd->add_option("--test", synth_test);
  synth_cmd->add_option("--seed", synth_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      return run_train(name, mnist_dir, n_samples, data_seed, limit, seed, epochs, batch, lr,
                       lambda, scope, pair_mode, pair_fraction, include_biases, out);
    }
    if (attack_cmd->parsed()) {
      const bool use_box = bh->count() > 0;
      return run_attack(model_path, attack_seed, budget_queries, budget_seconds, epsilon, lines,
                        cluster_tol, refine_tol, box_low, box_high, use_box, attack_out, score);
    }
    if (prob_cmd->parsed()) {
      return run_prob(prob_model, prob_layer, prob_low, prob_high, prob_out, prob_csv);
    }
    if (stats_cmd->parsed()) {
      return run_stats(stats_model, stats_layer, bins, bin_low, bin_high, stats_out);
    }
    if (exp_cmd->parsed()) return run_experiment_cmd(config_path, exp_mnist_dir, exp_out);
    if (report_cmd->parsed()) return run_report(report_dir);
    if (synth_cmd->parsed()) {
      write_synthetic_digit_corpus(synth_dir, synth_train, synth_test, synth_seed);
      std::cout << "wrote synthetic corpus to " << synth_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
