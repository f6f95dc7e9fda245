#pragma once

#include <filesystem>
#include <string>

#include "sigguard/extraction.hpp"
#include "sigguard/mlp.hpp"
#include "sigguard/theory.hpp"

namespace sigguard {

// Model file, version "1": architecture array, row-major per-layer weight
// arrays, bias arrays, seed and metadata. Doubles are emitted in
// shortest-round-trip form, so save/load is bit-exact.
std::string model_to_json(const MLPModel& model);
MLPModel model_from_json(const std::string& text);
void save_model(const MLPModel& model, const std::filesystem::path& path);
MLPModel load_model(const std::filesystem::path& path);

std::string attack_report_to_json(const AttackReport& report);
void save_attack_report(const AttackReport& report, const std::filesystem::path& path);

std::string probability_report_to_json(const ModelProbabilityReport& report);
std::string probability_report_to_csv(const ModelProbabilityReport& report);

}  // namespace sigguard
