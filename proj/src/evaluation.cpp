#include "rehab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rehab/synth.hpp"
#include "rehab/training.hpp"

namespace rehab {

namespace {

using json = nlohmann::ordered_json;

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Draws quota[c] samples of each class from `pool`; returns (kept, drawn).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_draw(const Corpus& corpus,
                                                                              const std::vector<std::size_t>& pool,
                                                                              double ratio, std::mt19937_64& rng) {
  std::array<std::vector<std::size_t>, kClassCount> by_class;
  for (std::size_t i : pool) by_class[class_index(corpus.sequences[i].label)].push_back(i);
  ClassCounts counts{};
  for (std::size_t c = 0; c < kClassCount; ++c) counts[c] = by_class[c].size();
  const ClassCounts quota = stratified_quota(counts, ratio);

  std::vector<std::size_t> kept, drawn;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    drawn.insert(drawn.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    kept.insert(kept.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
  }
  return {std::move(kept), std::move(drawn)};
}

struct Reference {
  Exercise exercise;
  const char* ours;
  const char* lstm_best;
  const char* lstm_mean;
  const char* gmm;
};

constexpr std::array<Reference, 3> kReference{{
    {Exercise::torso_rotation, "73.17", "64.44", "53.89", "27.78"},
    {Exercise::flank_stretch, "64.10", "43.04", "31.64", "25.32"},
    {Exercise::hiding_face, "74.28", "56.19", "49.1", "33.33"},
}};

const Reference& reference_for(Exercise e) {
  return kReference[static_cast<std::size_t>(e)];
}

}  // namespace

double default_test_ratio(int scenario) {
  switch (scenario) {
    case 1: return 0.0;
    case 2: return 0.2;
    case 3: return 0.15;
    default: throw std::invalid_argument("unknown scenario " + std::to_string(scenario));
  }
}

ClassCounts stratified_quota(const ClassCounts& counts, double ratio) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(total) * ratio));
  ClassCounts quota{};
  std::array<double, kClassCount> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double exact = static_cast<double>(counts[c]) * ratio;
    quota[c] = std::min(counts[c], static_cast<std::size_t>(std::floor(exact + 1e-9)));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::array<std::size_t, kClassCount> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; assigned < target && k < kClassCount; ++k) {
    const std::size_t c = order[k];
    if (quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

SplitPlan make_split(const Corpus& corpus, int scenario, double ratio, std::uint64_t seed) {
  if (scenario < 1 || scenario > 3) throw std::invalid_argument("unknown scenario " + std::to_string(scenario));
  if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("test ratio must lie in [0, 1)");

  std::array<std::vector<std::size_t>, 4> by_group;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    by_group[static_cast<std::size_t>(corpus.sequences[i].group)].push_back(i);
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("scenario ") + std::to_string(scenario) + ": " + what);
  };

  SplitPlan plan;
  plan.scenario = scenario;
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(scenario)));

  if (scenario == 1) {
    require(!by_group[3].empty(), "group 3 is empty");
    require(!by_group[1].empty() || !by_group[2].empty(), "groups 1 and 2 are empty");
    plan.train = by_group[3];
    plan.test = by_group[1];
    plan.test.insert(plan.test.end(), by_group[2].begin(), by_group[2].end());
  } else if (scenario == 2) {
    require(!corpus.empty(), "corpus is empty");
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::tie(plan.train, plan.test) = stratified_draw(corpus, all, ratio, rng);
  } else {
    require(!by_group[1].empty(), "group 1 is empty");
    require(!by_group[2].empty() || !by_group[3].empty(), "groups 2 and 3 are empty");
    std::vector<std::size_t> pool = by_group[2];
    pool.insert(pool.end(), by_group[3].begin(), by_group[3].end());
    std::vector<std::size_t> drawn;
    std::tie(plan.train, drawn) = stratified_draw(corpus, pool, ratio, rng);
    plan.test = by_group[1];
    plan.test.insert(plan.test.end(), drawn.begin(), drawn.end());
  }

  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  for (std::size_t i : plan.train) ++plan.train_counts[class_index(corpus.sequences[i].label)];
  for (std::size_t i : plan.test) ++plan.test_counts[class_index(corpus.sequences[i].label)];
  return plan;
}

SplitPlan make_split(const Corpus& corpus, int scenario, std::uint64_t seed) {
  return make_split(corpus, scenario, default_test_ratio(scenario), seed);
}

Corpus subset(const Corpus& corpus, std::span<const std::size_t> indices) {
  Corpus out;
  out.sequences.reserve(indices.size());
  for (std::size_t i : indices) out.sequences.push_back(corpus.sequences.at(i));
  return out;
}

EvaluationReport evaluate_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
  if (truth.empty()) throw std::invalid_argument("empty test set");
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth/prediction length mismatch");

  EvaluationReport r;
  r.samples = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= kClassCount || predicted[i] >= kClassCount) throw std::out_of_range("class index out of range");
    ++r.counts[truth[i]][predicted[i]];
    ++r.test_counts[truth[i]];
    if (truth[i] == predicted[i]) ++correct;
  }
  const auto n = static_cast<double>(r.samples);
  r.accuracy = static_cast<double>(correct) / n;

  double f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    r.test_frequencies[c] = static_cast<double>(r.test_counts[c]) / n;
    r.absent[c] = r.test_counts[c] == 0;
    if (r.absent[c]) continue;
    for (std::size_t p = 0; p < kClassCount; ++p)
      r.confusion[c][p] = static_cast<double>(r.counts[c][p]) / static_cast<double>(r.test_counts[c]);

    const std::size_t tp = r.counts[c][c];
    std::size_t fp = 0;
    for (std::size_t t = 0; t < kClassCount; ++t)
      if (t != c) fp += r.counts[t][c];
    const std::size_t fn = r.test_counts[c] - tp;
    f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    ++present;
  }
  r.macro_f1 = f1_sum / static_cast<double>(present);
  return r;
}

EvaluationReport evaluate(Model& model, const Corpus& test_set) {
  if (test_set.empty()) throw std::invalid_argument("empty test set");
  constexpr std::size_t kChunk = 32;
  std::vector<std::size_t> predicted;
  predicted.reserve(test_set.size());
  for (std::size_t begin = 0; begin < test_set.size(); begin += kChunk) {
    const std::size_t end = std::min(test_set.size(), begin + kChunk);
    std::vector<const SkeletonSequence*> chunk;
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(&test_set.sequences[i]);
    const auto p = predict(model, prepare_inputs(chunk, model.config.frames));
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  const auto truth = labels_of(test_set);
  return evaluate_predictions(truth, predicted);
}

std::string report_to_json(const EvaluationReport& r, const ReportContext& ctx) {
  json j;
  j["schema"] = kReportSchema;
  j["exercise"] = ctx.exercise;
  j["scenario"] = ctx.scenario;
  j["seed"] = ctx.seed;
  j["classes"] = json::array();
  for (std::size_t c = 0; c < kClassCount; ++c) j["classes"].push_back(to_string(label_from_index(c)));
  j["samples"] = r.samples;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["test_counts"] = r.test_counts;
  j["test_frequencies"] = r.test_frequencies;
  j["absent"] = r.absent;
  j["counts"] = r.counts;
  j["confusion"] = r.confusion;
  return j.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text, ReportContext* ctx) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<std::string>() != kReportSchema) throw std::invalid_argument("unsupported report schema");
    EvaluationReport r;
    r.samples = j.at("samples").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.test_counts = j.at("test_counts").get<ClassCounts>();
    r.test_frequencies = j.at("test_frequencies").get<std::array<double, kClassCount>>();
    r.absent = j.at("absent").get<std::array<bool, kClassCount>>();
    r.counts = j.at("counts").get<decltype(r.counts)>();
    r.confusion = j.at("confusion").get<ConfusionMatrix>();
    if (ctx) {
      ctx->exercise = j.at("exercise").get<std::string>();
      ctx->scenario = j.at("scenario").get<int>();
      ctx->seed = j.at("seed").get<std::uint64_t>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

std::string format_report(const EvaluationReport& r, const ReportContext& ctx) {
  std::ostringstream out;
  out << "exercise " << ctx.exercise << "  scenario " << ctx.scenario << "  seed " << ctx.seed << '\n';
  out << "samples " << r.samples << "  accuracy " << fixed2(100.0 * r.accuracy) << "%  macro-F1 "
      << fixed2(100.0 * r.macro_f1) << "%\n";
  out << pad("true \\ predicted", 22);
  for (std::size_t c = 0; c < kClassCount; ++c) out << pad(std::string(to_string(label_from_index(c))), 9);
  out << '\n';
  for (std::size_t t = 0; t < kClassCount; ++t) {
    out << pad(std::string(to_string(label_from_index(t))) + " (" + fixed2(r.test_frequencies[t]) + ")", 22);
    for (std::size_t p = 0; p < kClassCount; ++p) out << pad(fixed2(r.confusion[t][p]), 9);
    out << '\n';
  }
  return out.str();
}

std::string compare_table(std::span<const ComparisonEntry> entries) {
  std::ostringstream out;
  out << "Accuracy (%)\n";
  out << pad("Exercise", 16) << pad("Scenario", 10) << pad("Local", 18) << pad("Reference", 11)
      << pad("LSTM best", 11) << pad("LSTM mean", 11) << "GMM\n";
  for (const auto& e : entries) {
    std::string local = "-";
    if (!e.accuracies.empty()) {
      const double n = static_cast<double>(e.accuracies.size());
      const double mean = std::accumulate(e.accuracies.begin(), e.accuracies.end(), 0.0) / n;
      local = fixed2(100.0 * mean);
      if (e.accuracies.size() > 1) {
        double ss = 0.0;
        for (double a : e.accuracies) ss += (a - mean) * (a - mean);
        local += " +/- " + fixed2(100.0 * std::sqrt(ss / (n - 1.0)));
      }
    }
    const Reference& ref = reference_for(e.exercise);
    out << pad(std::string(to_string(e.exercise)), 16) << pad(std::to_string(e.scenario), 10) << pad(local, 18)
        << pad(ref.ours, 11) << pad(ref.lstm_best, 11) << pad(ref.lstm_mean, 11) << ref.gmm << '\n';
  }
  out << "Reference values are published results on clinical recordings and are not recomputed.\n";
  return out.str();
}

}  // namespace rehab
