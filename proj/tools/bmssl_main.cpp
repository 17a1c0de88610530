#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bmssl/ablation.hpp"
#include "bmssl/checkpoint.hpp"
#include "bmssl/error.hpp"
#include "bmssl/gradcheck.hpp"
#include "bmssl/rng.hpp"
#include "bmssl/spectral.hpp"
#include "bmssl/synth_data.hpp"
#include "bmssl/training.hpp"

namespace fs = std::filesystem;
using namespace bmssl;

namespace {

// Flags shared by every config-driven subcommand: --config, --seed,
// --set key=value and one --<key> per RunConfig field.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::map<std::string, std::string> fields;
  bool no_timing = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key=value config file");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--set", sets, "override, key=value (repeatable)");
    app->add_flag("--no-timing", no_timing, "omit wall-clock columns so outputs are byte-identical");
    for (const auto& key : RunConfig::keys()) {
      if (key == "seed") continue;
      app->add_option("--" + key, fields[key], "config field " + key)->group("Config fields");
    }
  }

  RunConfig build(const RunConfig& base = {}) const {
    RunConfig c = config_path.empty() ? base : RunConfig::load(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [key, value] : fields)
      if (!value.empty()) c.set(key, value);
    if (seed) c.seed = *seed;
    if (no_timing) c.record_time = false;
    c.validate();
    return c;
  }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed on " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

int cmd_gen_data(const ConfigFlags& flags, const std::string& out) {
  const RunConfig c = flags.build();
  const SyntheticDataset ds = generate_dataset(c.class_count, c.per_class, c.data_seed);
  save_dataset(ds, out);
  std::printf("wrote %zu images (%zu classes) to %s\n", ds.size(), c.class_count, out.c_str());
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& out) {
  const RunConfig c = flags.build();
  const fs::path dir(out);
  make_dir(dir);
  write_text(dir / "config.txt", c.serialize());
  const DataBundle data = prepare_data(c);
  MetricsWriter metrics((dir / "metrics.csv").string());
  const TrainResult r = train(c, data, [&](const MetricsRow& row) { metrics.write(row); });
  save_checkpoint(r.checkpoint, (dir / "checkpoint.bmsl").string());
  std::printf("mode=%s meta_steps=%zu final_accuracy=%.4f\n", std::string(mode_name(c.mode)).c_str(),
              r.checkpoint.meta_step, r.final_accuracy);
  return 0;
}

int cmd_eval(const ConfigFlags& flags, const std::string& checkpoint_path, const std::string& out) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  // The checkpoint's config is the base; command-line flags override it.
  const RunConfig c = flags.build(ck.config);
  const DataBundle data = prepare_data(c);
  const FewShotResult r = evaluate_fewshot(ck.params, data.eval_classes, fewshot_settings(c));
  if (!out.empty()) {
    auto f = open_out(out);
    f << "episode,accuracy\n";
    for (std::size_t e = 0; e < r.episode_accuracy.size(); ++e) f << e << ',' << r.episode_accuracy[e] << '\n';
  }
  std::printf("%zu-way %zu-shot over %zu episodes: mean_accuracy=%.4f\n", c.eval_way, c.eval_shot, c.eval_episodes,
              r.mean_accuracy);
  return 0;
}

int cmd_gradcheck(const std::string& scale, std::uint64_t seed, const std::string& out, const std::string& corrupt) {
  GradcheckOptions opt;
  opt.scale = parse_gradcheck_scale(scale);
  opt.seed = seed;
  if (!corrupt.empty()) {
    opt.hook = [corrupt](const std::string& check, LeafValues& g) {
      if (check.rfind(corrupt, 0) != 0 || g.empty()) return;
      g.begin()->second.data()[0] += 1.0;
    };
  }
  const GradcheckReport report = run_gradcheck(opt);
  if (out.empty()) {
    write_gradcheck_csv(std::cout, report);
  } else {
    auto f = open_out(out);
    write_gradcheck_csv(f, report);
  }
  for (const auto& e : report.entries) {
    if (!e.passed) {
      std::fprintf(stderr, "gradcheck FAILED: %s max_relative_error=%.3g (leaf %s[%zu] analytic %.6g numeric %.6g)\n",
                   e.check.c_str(), e.max_relative_error, e.worst_leaf.c_str(), e.worst_index, e.worst_analytic,
                   e.worst_numeric);
    }
  }
  return report.all_passed() ? 0 : static_cast<int>(ErrorKind::GradCheck);
}

struct SpectralFlags {
  std::size_t sources = 8;
  std::size_t views = 10;
  std::size_t d = 3;
  double eps_fraction = 0.5;
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

int cmd_spectral(const SpectralFlags& f, const std::string& out) {
  if (f.d == 0 || f.d >= f.views) throw ValidationError("--dim must satisfy 1 <= d < views");
  const DiscreteViewSpace space = random_view_space(f.sources, f.views, f.seed);
  const PositivePairChain chain = build_chain(space);
  const EigenRepresentation rep = top_eigenfunctions(chain, f.d);
  const double eps = f.eps_fraction * 2.0 * (1.0 - rep.eigenvalues[f.d]);
  const GapComparison cmp = compare_with_random_subspaces(chain, f.d, eps, f.samples, derive_seed(f.seed, 1));
  const fs::path dir(out);
  make_dir(dir);
  {
    auto s = open_out(dir / "spectrum.csv");
    write_spectrum_csv(s, rep.eigenvalues);
  }
  {
    auto g = open_out(dir / "gaps.csv");
    write_gap_csv(g, cmp);
  }
  std::printf("eps=%.6g top_gap=%.6g min_random_gap=%.6g beaten=%zu/%zu%s\n", cmp.eps, cmp.top_gap,
              cmp.min_random_gap, cmp.beaten, cmp.random_count,
              rep.degenerate_boundary ? " (degenerate eigenvalue boundary)" : "");
  return 0;
}

int cmd_ablate(const ConfigFlags& flags, const std::string& kind_name, const std::string& out) {
  const RunConfig c = flags.build();
  const AblationKind kind = parse_ablation(kind_name);
  const auto rows = run_ablation(kind, c, [](const AblationOutcome& o) {
    std::fprintf(stderr, "%s: accuracy=%.4f\n", o.setting.c_str(), o.accuracy);
  });
  if (out.empty()) {
    write_ablation_csv(std::cout, kind, rows);
  } else {
    auto f = open_out(out);
    write_ablation_csv(f, kind, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bootstrapped meta self-supervised learning on synthetic images"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, eval_flags, ablate_flags;
  std::string gen_out, train_out = "run", eval_ckpt, eval_out, ablate_kind, ablate_out;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset to a binary file");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "dataset file")->required();

  auto* tr = app.add_subcommand("train", "meta-train and write metrics.csv, checkpoint.bmsl, config.txt");
  train_flags.attach(tr);
  tr->add_option("--out", train_out, "output directory")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "few-shot evaluation of a checkpoint");
  eval_flags.attach(ev);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--out", eval_out, "per-episode accuracy CSV");

  std::string gc_scale = "tiny", gc_out, gc_corrupt;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--scale", gc_scale, "tiny or small")->capture_default_str();
  gc->add_option("--seed", gc_seed, "instance seed")->capture_default_str();
  gc->add_option("--out", gc_out, "CSV report (default stdout)");
  gc->add_option("--corrupt", gc_corrupt, "perturb the analytic gradient of checks with this prefix")
      ->group("");

  SpectralFlags sf;
  std::string spec_out = "spectral";
  auto* sp = app.add_subcommand("spectral-demo", "positive-pair chain spectrum and gap comparison");
  sp->add_option("--sources", sf.sources, "latent sources")->capture_default_str();
  sp->add_option("--views", sf.views, "views m")->capture_default_str();
  sp->add_option("--dim", sf.d, "representation dimension d")->capture_default_str();
  sp->add_option("--eps-fraction", sf.eps_fraction, "eps as a fraction of 2(1 - lambda_{d+1})")->capture_default_str();
  sp->add_option("--samples", sf.samples, "random subspaces")->capture_default_str();
  sp->add_option("--seed", sf.seed, "seed")->capture_default_str();
  sp->add_option("--out", spec_out, "output directory")->capture_default_str();

  auto* ab = app.add_subcommand("ablate", "delta, augmentation or structure sweep");
  ablate_flags.attach(ab);
  ab->add_option("--kind", ablate_kind, "delta, augmentation or structure")->required();
  ab->add_option("--out", ablate_out, "CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Validation);
  }

  try {
    if (*gen) return cmd_gen_data(gen_flags, gen_out);
    if (*tr) return cmd_train(train_flags, train_out);
    if (*ev) return cmd_eval(eval_flags, eval_ckpt, eval_out);
    if (*gc) return cmd_gradcheck(gc_scale, gc_seed, gc_out, gc_corrupt);
    if (*sp) return cmd_spectral(sf, spec_out);
    if (*ab) return cmd_ablate(ablate_flags, ablate_kind, ablate_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
