#pragma once

// Train/test scenarios over participant groups, stratified splitting and
// classification reports with row-normalized confusion matrices.
//
// Scenario 1: train on group 3 (simulated errors), test on groups 1 and 2.
// Scenario 2: stratified split of everything, 80:20 by default.
// Scenario 3: test on all of group 1 plus a stratified 15% of groups 2 and 3.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rehab/model.hpp"
#include "rehab/sequence.hpp"

namespace rehab {

using ClassCounts = std::array<std::size_t, kClassCount>;
using ConfusionMatrix = std::array<std::array<double, kClassCount>, kClassCount>;

struct SplitPlan {
  int scenario = 2;
  std::vector<std::size_t> train;  // ascending corpus indices
  std::vector<std::size_t> test;
  ClassCounts train_counts{};
  ClassCounts test_counts{};
};

/// Test fraction used when none is given: 0 for scenario 1, 0.2 for 2, 0.15 for 3.
double default_test_ratio(int scenario);

/// Per-class test counts for a stratified draw of round(total * ratio) samples:
/// floors of the exact quotas, leftovers to the largest remainders (lower class wins ties).
ClassCounts stratified_quota(const ClassCounts& counts, double ratio);

/// Deterministic given `seed`. Throws std::invalid_argument for an unknown scenario, a ratio
/// outside [0, 1) or when a group the scenario needs is empty.
SplitPlan make_split(const Corpus& corpus, int scenario, double ratio, std::uint64_t seed);
SplitPlan make_split(const Corpus& corpus, int scenario, std::uint64_t seed);

/// Copies the selected sequences in index order.
Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices);

struct EvaluationReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<std::array<std::size_t, kClassCount>, kClassCount> counts{};  // [true][predicted]
  ConfusionMatrix confusion{};  // counts / true-class total; absent rows stay zero
  ClassCounts test_counts{};
  std::array<double, kClassCount> test_frequencies{};
  std::array<bool, kClassCount> absent{};
};

/// Throws std::invalid_argument on empty or mismatched inputs, std::out_of_range on a bad class.
EvaluationReport evaluate_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

/// Predicts every sequence of `test_set` with `model` (inference mode) and scores it.
EvaluationReport evaluate(Model& model, const Corpus& test_set);

struct ReportContext {
  std::string exercise;
  int scenario = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kReportSchema = "rehab-evaluation/1";

std::string report_to_json(const EvaluationReport& report, const ReportContext& context);
/// Throws std::invalid_argument when the document does not follow the schema.
EvaluationReport report_from_json(const std::string& json, ReportContext* context = nullptr);

/// Human-readable summary with the confusion matrix; class frequencies in brackets.
std::string format_report(const EvaluationReport& report, const ReportContext& context);

struct ComparisonEntry {
  Exercise exercise = Exercise::torso_rotation;
  int scenario = 2;
  /// One accuracy per seed; several are shown as mean +/- std.
  std::vector<double> accuracies;
};

/// Local accuracies next to the published reference accuracies per exercise.
std::string compare_table(std::span<const ComparisonEntry> entries);

}  // namespace rehab
