#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "srvo/policy.hpp"
#include "srvo/scene.hpp"
#include "srvo/threading.hpp"
#include "srvo/training.hpp"

namespace srvo {

struct CemConfig {
  double sigma = 0.05;     // candidate perturbation scale (0.003 in the
                           // full-scale setup; selectable via config)
  int n_candidates = 150;
  int top_k = 5;
};

inline Action select_action_greedy(const PolicyOutput& out) {
  return {{out.action_mean.data[0], out.action_mean.data[1], out.action_mean.data[2]}};
}

// The Gaussian-perturbed candidate set around the action mean, in generation
// order. Exposed so oracles can score the exact same set.
inline std::vector<Action> cem_candidates(const PolicyOutput& out, const CemConfig& cfg,
                                          uint64_t seed) {
  Rng rng(mix_seed(seed, 0xCE91ULL));
  const Vec3 mean{out.action_mean.data[0], out.action_mean.data[1], out.action_mean.data[2]};
  std::vector<Action> candidates(static_cast<size_t>(cfg.n_candidates));
  for (int i = 0; i < cfg.n_candidates; ++i)
    candidates[static_cast<size_t>(i)] = {mean + Vec3{rng.normal(0.0, cfg.sigma),
                                                      rng.normal(0.0, cfg.sigma),
                                                      rng.normal(0.0, cfg.sigma)}};
  return candidates;
}

// One CEM generation with an arbitrary scorer; the executed action is drawn
// uniformly from the top_k by score (ties broken by candidate index).
inline Action select_action_cem_scored(const PolicyOutput& out, const CemConfig& cfg, uint64_t seed,
                                       const std::function<double(const Action&)>& score) {
  if (cfg.top_k < 1 || cfg.top_k > cfg.n_candidates) throw StructuralError("bad CEM top_k");
  const std::vector<Action> candidates = cem_candidates(out, cfg, seed);
  std::vector<double> scores(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) scores[i] = score(candidates[i]);
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  Rng pick_rng(mix_seed(seed, 0xCE92ULL));
  const int pick = order[pick_rng.uniform_int(static_cast<uint64_t>(cfg.top_k))];
  return candidates[static_cast<size_t>(pick)];
}

inline Action select_action_cem(const ParamStore& params, const PolicyOutput& out,
                                const CemConfig& cfg, uint64_t seed) {
  // candidates are scored as they would execute: the dynamics normalize
  // every command, and the Q head only ever sees unit-norm actions in training
  return select_action_cem_scored(out, cfg, seed, [&](const Action& a) {
    return q_value(params, out.trunk, normalized_or_zero(a.direction));
  });
}

enum class Selector { GREEDY, CEM };

inline const char* selector_name(Selector s) { return s == Selector::GREEDY ? "greedy" : "cem"; }

struct TrialResult {
  double final_distance = 0.0;
  bool success = false;  // reward at the final step
  Trajectory trajectory;
};

inline TrialResult run_trial(const ParamStore& params, Variant variant, const EnvConfig& env,
                             const Scene& scene, const Camera& camera, Selector selector, int T,
                             uint64_t seed, const CemConfig& cem = {},
                             const DescriptorShift* shift = nullptr) {
  UnrollOptions opt;
  opt.shift = shift;
  if (selector == Selector::CEM) {
    opt.select = [&](const PolicyOutput& out, int t) {
      return select_action_cem(params, out, cem, mix_seed(seed, 0xCE9AULL, static_cast<uint64_t>(t)));
    };
  }
  TrialResult res;
  res.trajectory = unroll(&params, variant, env, scene, camera, T, ActionSource::POLICY, seed, opt);
  res.final_distance = final_distance({res.trajectory.arm_final}, scene);
  res.success = res.trajectory.steps.back().reward == 1.0;
  return res;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

enum class Condition { NOVEL_VP_UNSEEN_T, NOVEL_VP_SEEN_T, SEEN_VP_UNSEEN_T };

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::NOVEL_VP_UNSEEN_T: return "novel_vp_unseen_t";
    case Condition::NOVEL_VP_SEEN_T: return "novel_vp_seen_t";
    case Condition::SEEN_VP_UNSEEN_T: return "seen_vp_unseen_t";
  }
  return "?";
}

inline ViewpointPool condition_pool(Condition c) {
  return c == Condition::SEEN_VP_UNSEEN_T ? ViewpointPool::TRAIN : ViewpointPool::HELDOUT;
}

inline DescriptorDomain condition_domain(Condition c) {
  return c == Condition::NOVEL_VP_SEEN_T ? DescriptorDomain::SEEN : DescriptorDomain::UNSEEN;
}

struct ConditionSpec {
  int n_objects = 2;
  Condition condition = Condition::NOVEL_VP_UNSEEN_T;
};

inline std::vector<ConditionSpec> default_conditions() {
  std::vector<ConditionSpec> out;
  for (int n : {2, 3})
    for (Condition c : {Condition::NOVEL_VP_UNSEEN_T, Condition::NOVEL_VP_SEEN_T,
                        Condition::SEEN_VP_UNSEEN_T})
      out.push_back({n, c});
  return out;
}

struct EvalRow {
  std::string variant;
  std::string selector;
  int n_objects = 0;
  Condition condition = Condition::NOVEL_VP_UNSEEN_T;
  int n_trials = 0;
  double mean_dist = 0.0;
  double median_dist = 0.0;
  double success_rate = 0.0;
  uint64_t seed = 0;
  std::vector<double> distances;  // per-trial, in trial order
};

struct EvalReport {
  uint64_t seed = 0;
  std::string config_json;
  std::vector<EvalRow> rows;
};

inline void finalize_row(EvalRow& row, const std::vector<double>& distances,
                         const std::vector<int>& successes) {
  row.distances = distances;
  row.n_trials = static_cast<int>(distances.size());
  double sum = 0.0;
  for (double d : distances) sum += d;
  row.mean_dist = sum / distances.size();
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  row.median_dist = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  int succ = 0;
  for (int s : successes) succ += s;
  row.success_rate = static_cast<double>(succ) / static_cast<double>(successes.size());
}

struct BenchmarkVariant {
  std::string name;
  const ParamStore* params = nullptr;  // null for the random baseline
  Variant variant = Variant::RECURRENT;
};

struct BenchmarkSettings {
  int n_trials = 300;
  int horizon = 10;
  Selector selector = Selector::GREEDY;
  CemConfig cem;
  int threads = 1;
  const DescriptorShift* shift = nullptr;
  bool include_random = true;
};

// Runs every variant against bit-identical per-trial scenes and cameras
// (paired trials) over the requested condition matrix.
inline EvalReport run_benchmark_variants(const std::vector<BenchmarkVariant>& variants,
                                         const EnvConfig& env,
                                         const std::vector<ConditionSpec>& conditions,
                                         const BenchmarkSettings& cfg, uint64_t seed) {
  EvalReport report;
  report.seed = seed;
  for (size_t ci = 0; ci < conditions.size(); ++ci) {
    const ConditionSpec& spec = conditions[ci];
    // trial environments are a pure function of (seed, condition, trial)
    std::vector<Scene> scenes(static_cast<size_t>(cfg.n_trials));
    std::vector<Camera> cameras(static_cast<size_t>(cfg.n_trials));
    std::vector<uint64_t> trial_seeds(static_cast<size_t>(cfg.n_trials));
    for (int i = 0; i < cfg.n_trials; ++i) {
      const uint64_t ts = mix_seed(seed, static_cast<uint64_t>(ci), static_cast<uint64_t>(i));
      trial_seeds[static_cast<size_t>(i)] = ts;
      scenes[static_cast<size_t>(i)] =
          sample_scene(env, mix_seed(ts, 0x5CULL), spec.n_objects, condition_domain(spec.condition));
      cameras[static_cast<size_t>(i)] =
          sample_camera(env, mix_seed(ts, 0xCAULL), condition_pool(spec.condition));
    }
    for (const auto& bv : variants) {
      EvalRow row;
      row.variant = bv.name;
      row.selector = bv.params ? selector_name(cfg.selector) : "none";
      row.n_objects = spec.n_objects;
      row.condition = spec.condition;
      row.seed = seed;
      std::vector<double> distances(static_cast<size_t>(cfg.n_trials));
      std::vector<int> successes(static_cast<size_t>(cfg.n_trials));
      parallel_for(cfg.n_trials, cfg.threads, [&](int64_t i) {
        const size_t k = static_cast<size_t>(i);
        if (bv.params) {
          TrialResult r = run_trial(*bv.params, bv.variant, env, scenes[k], cameras[k], cfg.selector,
                                    cfg.horizon, trial_seeds[k], cfg.cem, cfg.shift);
          distances[k] = r.final_distance;
          successes[k] = r.success ? 1 : 0;
        } else {
          UnrollOptions opt;
          opt.shift = cfg.shift;
          Trajectory t = unroll(nullptr, Variant::RECURRENT, env, scenes[k], cameras[k], cfg.horizon,
                                ActionSource::RANDOM, trial_seeds[k], opt);
          distances[k] = final_distance({t.arm_final}, scenes[k]);
          successes[k] = t.steps.back().reward == 1.0 ? 1 : 0;
        }
      });
      finalize_row(row, distances, successes);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

inline EvalReport run_benchmark(const ParamStore* params_recurrent, const ParamStore* params_reactive,
                                const EnvConfig& env, const std::vector<ConditionSpec>& conditions,
                                const BenchmarkSettings& cfg, uint64_t seed) {
  std::vector<BenchmarkVariant> variants;
  if (params_recurrent)
    variants.push_back({"recurrent", params_recurrent, detect_variant(*params_recurrent)});
  if (params_reactive)
    variants.push_back({"reactive", params_reactive, detect_variant(*params_reactive)});
  if (cfg.include_random) variants.push_back({"random", nullptr, Variant::RECURRENT});
  return run_benchmark_variants(variants, env, conditions, cfg, seed);
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string report_to_csv(const EvalReport& report) {
  std::string data;
  data += "variant,selector,n_objects,condition,n_trials,mean_dist,median_dist,success_rate,seed\n";
  for (const auto& row : report.rows) {
    data += row.variant + "," + row.selector + "," + std::to_string(row.n_objects) + "," +
            condition_name(row.condition) + "," + std::to_string(row.n_trials) + "," +
            format_double(row.mean_dist) + "," + format_double(row.median_dist) + "," +
            format_double(row.success_rate) + "," + std::to_string(row.seed) + "\n";
  }
  std::string out;
  out += "# srvo eval report v1\n";
  out += "# seed: " + std::to_string(report.seed) + "\n";
  if (!report.config_json.empty()) out += "# config: " + report.config_json + "\n";
  out += "# metric: euclidean end-effector distance to the query object at the final step\n";
  out += "# context: full-scale reference means (m), 3-object novel_vp_unseen_t: "
         "recurrent_mc=0.0802 reactive_mc=0.1130 recurrent_onpolicy_mc=0.0685; "
         "3-object seen_vp_unseen_t: recurrent_mc=0.0546 recurrent_onpolicy_mc=0.0307\n";
  out += "# fnv64: " + std::to_string(fnv1a64(data.data(), data.size())) + "\n";
  out += data;
  return out;
}

// Tiny bar-chart SVG of a row's final-distance distribution.
inline std::string row_histogram_svg(const EvalRow& row, int bins = 20) {
  double max_d = 0.0;
  for (double d : row.distances) max_d = std::max(max_d, d);
  if (max_d <= 0.0) max_d = 1.0;
  std::vector<int> counts(static_cast<size_t>(bins), 0);
  for (double d : row.distances) {
    int b = static_cast<int>(d / max_d * bins);
    if (b >= bins) b = bins - 1;
    counts[static_cast<size_t>(b)]++;
  }
  int max_count = 1;
  for (int c : counts) max_count = std::max(max_count, c);
  const int w = 400, h = 220, pad = 30;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
                    "\" height=\"" + std::to_string(h) + "\">\n";
  svg += "<text x=\"8\" y=\"16\" font-size=\"11\">" + row.variant + "/" + row.selector + " " +
         std::to_string(row.n_objects) + "obj " + condition_name(row.condition) +
         " mean=" + format_double(row.mean_dist) + "</text>\n";
  const double bw = static_cast<double>(w - 2 * pad) / bins;
  for (int b = 0; b < bins; ++b) {
    const double bh = static_cast<double>(counts[static_cast<size_t>(b)]) / max_count * (h - 2 * pad);
    svg += "<rect x=\"" + format_double(pad + b * bw) + "\" y=\"" + format_double(h - pad - bh) +
           "\" width=\"" + format_double(bw * 0.9) + "\" height=\"" + format_double(bh) +
           "\" fill=\"#4878cf\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline const EvalRow* find_row(const EvalReport& report, const std::string& variant, int n_objects,
                               Condition condition) {
  for (const auto& row : report.rows)
    if (row.variant == variant && row.n_objects == n_objects && row.condition == condition)
      return &row;
  return nullptr;
}

}  // namespace srvo
