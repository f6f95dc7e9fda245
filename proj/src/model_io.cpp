#include "sigguard/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sigguard {

using nlohmann::json;

std::string model_to_json(const MLPModel& model) {
  model.check_consistent();
  json doc;
  doc["version"] = "1";
  doc["architecture"] = model.architecture.layer_sizes;
  json weights = json::array();
  json biases = json::array();
  for (const auto& w : model.weights) weights.push_back(w.data);
  for (const auto& b : model.biases) biases.push_back(b);
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  doc["training_seed"] = model.training_seed;
  doc["metadata"] = model.metadata;
  return doc.dump(2);
}

MLPModel model_from_json(const std::string& text) {
  const json doc = json::parse(text);
  const std::string version = doc.at("version").get<std::string>();
  if (version != "1") throw std::runtime_error("unsupported model file version: " + version);
  MLPModel model;
  model.architecture.layer_sizes = doc.at("architecture").get<std::vector<int>>();
  model.architecture.validate();
  const auto& weights = doc.at("weights");
  const auto& biases = doc.at("biases");
  const auto& sizes = model.architecture.layer_sizes;
  if (weights.size() != static_cast<std::size_t>(model.architecture.layer_count()) ||
      biases.size() != weights.size()) {
    throw std::runtime_error("model file layer count does not match architecture");
  }
  for (int l = 0; l < model.architecture.layer_count(); ++l) {
    Matrix w(sizes[l + 1], sizes[l]);
    const auto flat = weights[l].get<std::vector<double>>();
    if (flat.size() != w.data.size()) {
      throw std::runtime_error("weight array length mismatch at layer " + std::to_string(l));
    }
    w.data = flat;
    model.weights.push_back(std::move(w));
    model.biases.push_back(biases[l].get<std::vector<double>>());
  }
  if (doc.contains("training_seed")) model.training_seed = doc["training_seed"].get<std::uint64_t>();
  if (doc.contains("metadata")) {
    model.metadata = doc["metadata"].get<std::map<std::string, std::string>>();
  }
  model.check_consistent();
  return model;
}

void save_model(const MLPModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw std::runtime_error("short write to model file: " + path.string());
}

MLPModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

std::string attack_report_to_json(const AttackReport& report) {
  json doc;
  doc["clusters_found"] = report.clusters_found;
  doc["target_neuron_count"] = report.target_neuron_count;
  doc["verdict"] = report.verdict == Verdict::kSuccess ? "success" : "failure";
  doc["failure_reason"] = report.failure_reason;
  doc["queries_used"] = report.stats.queries_used;
  doc["elapsed_seconds"] = report.stats.elapsed_seconds;
  doc["signature_seconds"] = report.signature_seconds;
  doc["rounds"] = report.rounds;
  doc["points_found"] = report.points_found;
  doc["signatures_recovered"] = report.signatures_recovered;
  doc["centroids"] = report.signatures;
  json errors = json::array();
  for (double e : report.match_errors) {
    if (std::isfinite(e)) {
      errors.push_back(e);
    } else {
      errors.push_back(nullptr);  // unmatched neuron
    }
  }
  doc["match_errors"] = std::move(errors);
  return doc.dump(2);
}

void save_attack_report(const AttackReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report file for writing: " + path.string());
  out << attack_report_to_json(report) << '\n';
  if (!out) throw std::runtime_error("short write to report file: " + path.string());
}

namespace {

json pair_entry_to_json(const PairProbabilityEntry& entry) {
  json e;
  e["i"] = entry.i;
  e["j"] = entry.j;
  e["k_coeffs"] = entry.prob.k_coeffs;
  e["theta"] = entry.prob.theta;
  e["p_between"] = entry.prob.p_between;
  e["success_probability"] = entry.prob.success_probability;
  e["direction"] = entry.prob.direction_case == DirectionCase::kSame ? "same" : "opposite";
  e["monte_carlo_fallback"] = entry.monte_carlo_fallback;
  return e;
}

}  // namespace

std::string probability_report_to_json(const ModelProbabilityReport& report) {
  json doc;
  doc["layer_index"] = report.layer_index;
  doc["worst_case"] = report.worst_case;
  doc["worst_pair"] = {report.worst_i, report.worst_j};
  json pairs = json::array();
  for (const auto& entry : report.pairs) pairs.push_back(pair_entry_to_json(entry));
  doc["pairs"] = std::move(pairs);
  return doc.dump(2);
}

std::string probability_report_to_csv(const ModelProbabilityReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "i,j,theta,p_between,success_probability,direction,monte_carlo_fallback\n";
  for (const auto& entry : report.pairs) {
    out << entry.i << ',' << entry.j << ',' << entry.prob.theta << ',' << entry.prob.p_between
        << ',' << entry.prob.success_probability << ','
        << (entry.prob.direction_case == DirectionCase::kSame ? "same" : "opposite") << ','
        << (entry.monte_carlo_fallback ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace sigguard
