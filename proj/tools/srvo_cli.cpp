// srvo: train and evaluate the viewpoint-invariant servoing controller.
//
// Subcommands: gen, train, dagger, adapt, eval, verify.
// Exit codes: 0 ok, 2 usage or I/O error, 3 numeric divergence,
// 4 verification failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srvo/checkpoint.hpp"
#include "srvo/config.hpp"
#include "srvo/eval.hpp"
#include "srvo/policy.hpp"
#include "srvo/training.hpp"
#include "srvo/verify.hpp"

namespace fs = std::filesystem;
using namespace srvo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitVerify = 4;

struct CommonOpts {
  std::string config_path;
  int64_t seed_override = -1;
  int threads_override = -1;
};

RunConfig load_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    std::ifstream f(opts.config_path);
    if (!f) throw UsageError("cannot open config file: " + opts.config_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    cfg = config_from_string(text);
  }
  if (opts.seed_override >= 0) cfg.seed = static_cast<uint64_t>(opts.seed_override);
  if (const char* env_seed = std::getenv("SRVO_SEED")) cfg.seed = std::stoull(env_seed);
  if (opts.threads_override >= 0) cfg.threads = opts.threads_override;
  validate_config(cfg);
  std::cout << "resolved config: " << resolved_config_json(cfg) << "\n";
  return cfg;
}

void ensure_parent_dir(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw UsageError("cannot open for write: " + path);
  f << text;
  if (!f) throw UsageError("write failed: " + path);
}

std::string curves_csv(const std::vector<CurvePoint>& curves, const RunConfig& cfg) {
  std::string out = "# config: " + resolved_config_json(cfg) + "\n";
  out += "step,supervised,value,localization,total\n";
  for (const auto& p : curves)
    out += std::to_string(p.step) + "," + format_double(p.supervised) + "," +
           format_double(p.value) + "," + format_double(p.localization) + "," +
           format_double(p.total) + "\n";
  return out;
}

Variant parse_variant(const std::string& name) {
  if (name == "recurrent") return Variant::RECURRENT;
  if (name == "reactive") return Variant::REACTIVE;
  throw UsageError("unknown variant: " + name);
}

int cmd_gen(const CommonOpts& common, const std::string& out_override) {
  const RunConfig cfg = load_config(common);
  const std::string out_path = out_override.empty() ? cfg.paths.dataset : out_override;
  auto demos = generate_demonstrations(cfg.env, cfg.training.episodes, cfg.training.demo_noise,
                                       mix_seed(cfg.seed, 0x6E4ULL), cfg.training.horizon,
                                       cfg.threads);
  ensure_parent_dir(out_path);
  const std::string bytes =
      serialize_dataset(demos, cfg.training.horizon, cfg.seed, resolved_config_json(cfg));
  binio::write_file(out_path, bytes);
  std::cout << "dataset: " << out_path << " episodes=" << demos.size() << " bytes=" << bytes.size()
            << " fnv64=" << fnv1a64(bytes.data(), bytes.size()) << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& common, const std::string& variant_name,
              const std::string& dataset_override, const std::string& out_override,
              const std::string& resume_path) {
  const RunConfig cfg = load_config(common);
  const Variant variant = parse_variant(variant_name);
  const std::string dataset_path = dataset_override.empty() ? cfg.paths.dataset : dataset_override;
  const std::string out_path = out_override.empty()
                                   ? cfg.paths.checkpoint_dir + "/" + variant_name + ".srvo"
                                   : out_override;

  ReplayBuffer buffer(cfg.training.buffer_capacity);
  for (auto& t : read_dataset_file(dataset_path)) buffer.push(std::move(t));

  ParamStore params;
  AdamState opt;
  int64_t start_step = 0;
  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    params = std::move(ckpt.params);
    opt = std::move(ckpt.adam);
    start_step = opt.t;
    std::cout << "resumed from " << resume_path << " at step " << start_step << "\n";
  } else {
    params = make_policy_params(cfg.model, variant,
                                mix_seed(cfg.seed, variant == Variant::RECURRENT ? 0x41ULL : 0x42ULL));
    opt.cfg = cfg.train_settings().adam;
  }

  TrainSettings settings = cfg.train_settings();
  ensure_parent_dir(out_path);
  auto checkpoint_cb = [&](int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_step%06lld.srvo", static_cast<long long>(step));
    save_checkpoint(cfg.paths.checkpoint_dir + "/" + variant_name + buf, params, opt,
                    resolved_config_json(cfg));
  };
  ensure_parent_dir(cfg.paths.checkpoint_dir + "/x");
  auto curves = train(params, variant, buffer, settings, cfg.env, opt, checkpoint_cb, start_step);
  save_checkpoint(out_path, params, opt, resolved_config_json(cfg));
  write_text(cfg.paths.report_dir + "/curves_" + variant_name + ".csv", curves_csv(curves, cfg));
  std::cout << "checkpoint: " << out_path << " steps=" << opt.t << "\n";
  if (!curves.empty())
    std::cout << "final losses: supervised=" << format_double(curves.back().supervised)
              << " value=" << format_double(curves.back().value)
              << " localization=" << format_double(curves.back().localization) << "\n";
  return kExitOk;
}

int cmd_dagger(const CommonOpts& common, const std::string& checkpoint_path,
               const std::string& dataset_override, const std::string& out_override,
               const std::string& out_dataset_override, int iters) {
  const RunConfig cfg = load_config(common);
  if (iters < 0) iters = cfg.training.dagger_iters;
  const std::string dataset_path = dataset_override.empty() ? cfg.paths.dataset : dataset_override;
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Variant variant = detect_variant(ckpt.params);
  const std::string out_path = out_override.empty()
                                   ? cfg.paths.checkpoint_dir + "/" + variant_name(variant) + "_dagger.srvo"
                                   : out_override;

  ReplayBuffer buffer(cfg.training.buffer_capacity);
  std::vector<Trajectory> all;
  DatasetHeader header;
  for (auto& t : read_dataset_file(dataset_path, &header)) {
    all.push_back(t);
    buffer.push(std::move(t));
  }

  TrainSettings settings = cfg.train_settings();
  for (int iter = 0; iter < iters; ++iter) {
    auto onpolicy = dagger_iteration(ckpt.params, variant, cfg.env, cfg.training.dagger_episodes,
                                     cfg.training.horizon,
                                     mix_seed(cfg.seed, 0xDA6ULL, static_cast<uint64_t>(iter)),
                                     cfg.threads);
    std::cout << "dagger iteration " << (iter + 1) << ": " << onpolicy.size()
              << " on-policy episodes relabeled\n";
    for (auto& t : onpolicy) {
      all.push_back(t);
      buffer.push(std::move(t));
    }
    settings.steps = ckpt.adam.t + cfg.training.dagger_steps;
    train(ckpt.params, variant, buffer, settings, cfg.env, ckpt.adam, nullptr, ckpt.adam.t);
  }

  ensure_parent_dir(out_path);
  save_checkpoint(out_path, ckpt.params, ckpt.adam, resolved_config_json(cfg));
  const std::string out_dataset =
      out_dataset_override.empty() ? dataset_path + ".dagger" : out_dataset_override;
  ensure_parent_dir(out_dataset);
  write_dataset_file(out_dataset, all, cfg.training.horizon, cfg.seed, resolved_config_json(cfg));
  std::cout << "checkpoint: " << out_path << "\naugmented dataset: " << out_dataset
            << " episodes=" << all.size() << "\n";
  return kExitOk;
}

int cmd_adapt(const CommonOpts& common, const std::string& checkpoint_path,
              const std::string& out_override) {
  const RunConfig cfg = load_config(common);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const Variant variant = detect_variant(ckpt.params);
  const std::string out_path = out_override.empty()
                                   ? cfg.paths.checkpoint_dir + "/" + variant_name(variant) + "_adapted.srvo"
                                   : out_override;

  const DescriptorShift shift = make_descriptor_shift(cfg.training.shift_seed);
  const auto labeled = make_adapt_set(cfg.env, shift, cfg.training.adapt_labels,
                                      mix_seed(cfg.seed, 0xADAULL));
  const auto heldout = make_adapt_set(cfg.env, shift, 200, mix_seed(cfg.seed, 0xAD8ULL));

  std::map<std::string, Tensor> frozen_before;
  for (const auto& [name, t] : ckpt.params.all())
    if (!is_encoder_param(name)) frozen_before.emplace(name, t);

  const double acc_before = localization_accuracy(ckpt.params, heldout);
  AdaptSettings settings;
  settings.steps = cfg.training.adapt_steps;
  settings.batch_size = cfg.training.adapt_batch;
  settings.adam.lr = cfg.training.adapt_lr;
  settings.seed = cfg.seed;
  adapt_encoder(ckpt.params, labeled, settings);
  const double acc_after = localization_accuracy(ckpt.params, heldout);

  size_t checked = 0;
  for (const auto& [name, t] : frozen_before) {
    const Tensor& now = ckpt.params.at(name);
    if (now.data != t.data) throw StructuralError("frozen tensor changed: " + name);
    ++checked;
  }
  std::cout << "frozen tensors: OK (" << checked << " non-encoder tensors bit-identical)\n";
  std::cout << "held-out localization accuracy: " << format_double(acc_before) << " -> "
            << format_double(acc_after) << "\n";

  ensure_parent_dir(out_path);
  save_checkpoint(out_path, ckpt.params, ckpt.adam, resolved_config_json(cfg));
  std::cout << "checkpoint: " << out_path << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOpts& common, const std::string& recurrent_path,
             const std::string& reactive_path, const std::string& selector_name_arg,
             const std::string& out_override, const std::string& svg_dir, bool shifted,
             const std::string& dump_pools_path) {
  const RunConfig cfg = load_config(common);
  if (!dump_pools_path.empty()) {
    ensure_parent_dir(dump_pools_path);
    write_text(dump_pools_path, pools_to_json(camera_pools_cached(cfg.env)).dump(2) + "\n");
    std::cout << "pools: " << dump_pools_path << "\n";
  }

  Checkpoint rec, rea;
  const ParamStore* rec_params = nullptr;
  const ParamStore* rea_params = nullptr;
  if (!recurrent_path.empty()) {
    rec = load_checkpoint(recurrent_path);
    if (detect_variant(rec.params) != Variant::RECURRENT)
      throw UsageError("--recurrent checkpoint holds a reactive model");
    rec_params = &rec.params;
  }
  if (!reactive_path.empty()) {
    rea = load_checkpoint(reactive_path);
    if (detect_variant(rea.params) != Variant::REACTIVE)
      throw UsageError("--reactive checkpoint holds a recurrent model");
    rea_params = &rea.params;
  }
  if (!rec_params && !rea_params) throw UsageError("eval needs at least one checkpoint");

  BenchmarkSettings settings;
  settings.n_trials = cfg.eval.n_trials;
  settings.horizon = cfg.eval.horizon;
  settings.selector = selector_name_arg == "cem" ? Selector::CEM : Selector::GREEDY;
  if (selector_name_arg != "cem" && selector_name_arg != "greedy")
    throw UsageError("selector must be greedy or cem");
  settings.cem = cfg.cem_config();
  settings.threads = cfg.threads;
  DescriptorShift shift;
  if (shifted) {
    shift = make_descriptor_shift(cfg.training.shift_seed);
    settings.shift = &shift;
  }

  EvalReport report = run_benchmark(rec_params, rea_params, cfg.env, default_conditions(), settings,
                                    mix_seed(cfg.seed, 0xE7A1ULL));
  report.config_json = resolved_config_json(cfg);

  const std::string out_path = out_override.empty()
                                   ? cfg.paths.report_dir + "/eval_" + selector_name_arg +
                                         (shifted ? "_shifted" : "") + ".csv"
                                   : out_override;
  write_text(out_path, report_to_csv(report));
  std::cout << "report: " << out_path << "\n";
  for (const auto& row : report.rows)
    std::cout << "  " << row.variant << "/" << row.selector << " " << row.n_objects << "obj "
              << condition_name(row.condition) << ": mean=" << format_double(row.mean_dist)
              << " median=" << format_double(row.median_dist)
              << " success=" << format_double(row.success_rate) << "\n";
  if (!svg_dir.empty()) {
    fs::create_directories(svg_dir);
    for (const auto& row : report.rows) {
      const std::string name = svg_dir + "/" + row.variant + "_" + row.selector + "_" +
                               std::to_string(row.n_objects) + "obj_" +
                               condition_name(row.condition) + ".svg";
      write_text(name, row_histogram_svg(row));
    }
    std::cout << "histograms: " << svg_dir << "\n";
  }
  return kExitOk;
}

int cmd_verify(const CommonOpts& common, const std::string& artifact_path) {
  const RunConfig cfg = load_config(common);
  std::vector<VerifyResult> results = run_verify_suite(cfg);
  if (!artifact_path.empty()) results.push_back(verify_artifact(artifact_path));
  bool all_ok = true;
  for (const auto& r : results) {
    std::cout << "check " << r.name << ": " << (r.ok ? "ok" : "FAIL")
              << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
    all_ok = all_ok && r.ok;
  }
  return all_ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"viewpoint-invariant servoing trainer/evaluator"};
  app.require_subcommand(1);
  app.fallthrough();  // --config etc. may follow the subcommand

  CommonOpts common;
  app.add_option("--config", common.config_path, "JSON config file");
  app.add_option("--seed", common.seed_override, "override config seed");
  app.add_option("--threads", common.threads_override, "worker thread cap");

  auto* gen = app.add_subcommand("gen", "synthesize noisy-expert demonstrations");
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset output path");

  auto* train_cmd = app.add_subcommand("train", "train a controller variant");
  std::string train_variant = "recurrent", train_dataset, train_out, train_resume;
  train_cmd->add_option("--variant", train_variant, "recurrent|reactive");
  train_cmd->add_option("--dataset", train_dataset, "dataset path");
  train_cmd->add_option("--out", train_out, "checkpoint output path");
  train_cmd->add_option("--resume", train_resume, "resume from checkpoint");

  auto* dagger = app.add_subcommand("dagger", "on-policy relabeling + retraining");
  std::string dg_ckpt, dg_dataset, dg_out, dg_out_dataset;
  int dg_iters = -1;  // -1: use the config value
  dagger->add_option("--checkpoint", dg_ckpt, "input checkpoint")->required();
  dagger->add_option("--dataset", dg_dataset, "dataset path");
  dagger->add_option("--out", dg_out, "checkpoint output path");
  dagger->add_option("--out-dataset", dg_out_dataset, "augmented dataset output path");
  dagger->add_option("--iters", dg_iters, "relabel/retrain iterations (default from config)");

  auto* adapt = app.add_subcommand("adapt", "shifted-domain encoder adaptation");
  std::string ad_ckpt, ad_out;
  adapt->add_option("--checkpoint", ad_ckpt, "input checkpoint")->required();
  adapt->add_option("--out", ad_out, "checkpoint output path");

  auto* eval_cmd = app.add_subcommand("eval", "condition-matrix benchmark");
  std::string ev_rec, ev_rea, ev_selector = "greedy", ev_out, ev_svg, ev_pools;
  bool ev_shifted = false;
  eval_cmd->add_option("--recurrent", ev_rec, "recurrent checkpoint");
  eval_cmd->add_option("--reactive", ev_rea, "reactive checkpoint");
  eval_cmd->add_option("--selector", ev_selector, "greedy|cem");
  eval_cmd->add_option("--out", ev_out, "report CSV path");
  eval_cmd->add_option("--svg-dir", ev_svg, "write per-row histograms here");
  eval_cmd->add_flag("--shifted", ev_shifted, "evaluate under the shifted descriptor domain");
  eval_cmd->add_option("--dump-pools", ev_pools, "write the camera pools JSON here");

  auto* verify = app.add_subcommand("verify", "gradient/oracle/determinism checks");
  std::string vf_artifact;
  verify->add_option("--artifact", vf_artifact, "also confirm this artifact's declared hash");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, gen_out);
    if (train_cmd->parsed())
      return cmd_train(common, train_variant, train_dataset, train_out, train_resume);
    if (dagger->parsed())
      return cmd_dagger(common, dg_ckpt, dg_dataset, dg_out, dg_out_dataset, dg_iters);
    if (adapt->parsed()) return cmd_adapt(common, ad_ckpt, ad_out);
    if (eval_cmd->parsed())
      return cmd_eval(common, ev_rec, ev_rea, ev_selector, ev_out, ev_svg, ev_shifted, ev_pools);
    if (verify->parsed()) return cmd_verify(common, vf_artifact);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
