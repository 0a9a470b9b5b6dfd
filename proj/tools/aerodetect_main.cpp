// Copyright (c) the aerodetect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <optional>
#include <set>

#include "aerodetect/analysis.hpp"
#include "aerodetect/backends.hpp"
#include "aerodetect/common.hpp"
#include "aerodetect/detector.hpp"
#include "aerodetect/evaluation.hpp"
#include "aerodetect/image.hpp"
#include "aerodetect/manifest.hpp"
#include "aerodetect/metrics.hpp"
#include "aerodetect/perturb.hpp"
#include "aerodetect/plot.hpp"

using namespace aerodetect;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string cache_dir;
  std::string weights_dir = "weights";
  std::vector<std::string> ae_pool = {"sd1", "sd2", "kd2.1"};
  std::string metric_id = "lpips-vgg16-l2";
  double fpr_level = 0.05;
  std::string device = "cpu";
  uint64_t seed = 0;
  int workers = 1;
};

// Precedence: flags > environment > config file > defaults. The flag layer
// is applied by main after this runs.
RunConfig base_config(const std::string& config_path) {
  RunConfig cfg;
  if (!config_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
      throw UsageError("malformed config file " + config_path + ": " + e.what());
    }
    cfg.cache_dir = j.value("cache_dir", cfg.cache_dir);
    cfg.weights_dir = j.value("weights_dir", cfg.weights_dir);
    cfg.ae_pool = j.value("ae_pool", cfg.ae_pool);
    cfg.metric_id = j.value("metric_id", cfg.metric_id);
    cfg.fpr_level = j.value("fpr_level", cfg.fpr_level);
    cfg.device = j.value("device", cfg.device);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
  }
  if (const char* v = std::getenv("AERODETECT_CACHE")) cfg.cache_dir = v;
  if (const char* v = std::getenv("AERODETECT_WEIGHTS")) cfg.weights_dir = v;
  if (const char* v = std::getenv("AERODETECT_DEVICE")) cfg.device = v;
  return cfg;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

json conventions_metadata() {
  return json{{"ap", "stepwise, ties grouped"},
              {"tpr_threshold", "largest achievable observed value"},
              {"preprocessing", "center crop to multiple of 8, no resampling"},
              {"reconstruction_resolution", "native"},
              {"distance_resolution", "native"},
              {"encoder_latents", "distribution mode"},
              {"crop_resample", "bicubic a=-0.75"},
              {"jpeg_chroma", "4:2:0 below q95, 4:4:4 at q95 and above"},
              {"noise_seeding", "per image, folded with content hash"},
              {"heatmap_display", "per-image min-max rescale; raw raster is authoritative"}};
}

struct Services {
  RunConfig cfg;
  BackendRegistry registry;
  DistanceCalculator calc;
  ReconCache cache;

  explicit Services(const RunConfig& c)
      : cfg(c),
        registry(BackendRegistry::with_builtins(c.weights_dir)),
        calc(c.weights_dir),
        cache(c.cache_dir.empty() ? ReconCache() : ReconCache(c.cache_dir)) {}

  std::vector<std::shared_ptr<AEBackend>> pool(const std::vector<std::string>& ids) {
    if (ids.empty()) throw UsageError("backend pool is empty");
    std::vector<std::shared_ptr<AEBackend>> out;
    for (const auto& id : ids) out.push_back(registry.get(id));
    return out;
  }
};

// Groups per-(image, ae) score rows back into per-image detection scores.
std::vector<std::pair<DetectionScore, ScoreRecord>> regroup_scores(
    const std::vector<ScoreRecord>& rows) {
  if (rows.empty()) throw UsageError("scores file is empty");
  const std::string metric = rows.front().metric_id;
  std::map<std::string, std::map<std::string, double>> per_hash;
  std::map<std::string, ScoreRecord> first_row;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (r.metric_id != metric)
      throw UsageError("scores mix metrics '" + metric + "' and '" + r.metric_id + "'");
    if (!per_hash.count(r.content_hash)) {
      order.push_back(r.content_hash);
      first_row.emplace(r.content_hash, r);
    }
    per_hash[r.content_hash][r.ae_id] = r.value;
  }
  std::vector<std::pair<DetectionScore, ScoreRecord>> out;
  for (const auto& h : order)
    out.emplace_back(make_detection_score(h, per_hash[h], metric), first_row.at(h));
  return out;
}

int run_detect(Services& sv, const std::string& manifest_path, const std::string& aes_csv,
               const std::string& metric_id, std::optional<double> threshold,
               const std::string& out_path) {
  const auto manifest = load_manifest(manifest_path);
  const MetricSpec spec = parse_metric_id(metric_id);
  auto pool = sv.pool(split_csv(aes_csv));
  ScoredManifest res = score_manifest(manifest, pool, sv.calc, spec, sv.cache, sv.cfg.workers);
  persist_scores(res.records, out_path);
  printf("scored %zu image(s) under %zu backend(s); wrote %s\n", res.scores.size(), pool.size(),
         out_path.c_str());
  if (threshold) {
    size_t generated = 0;
    for (const auto& s : res.scores) generated += decide(s, *threshold).is_generated;
    printf("decided generated: %zu/%zu at threshold %g\n", generated, res.scores.size(),
           *threshold);
  }
  if (!res.failures.empty()) printf("skipped %zu image(s); see warnings\n", res.failures.size());
  return 0;
}

int run_attribute(const std::string& scores_path, const std::string& out_path) {
  const auto rows = load_scores(scores_path);
  const auto grouped = regroup_scores(rows);
  std::map<std::string, std::vector<DetectionScore>> by_dataset;
  for (const auto& [score, meta] : grouped) by_dataset[meta.dataset].push_back(score);

  json per_dataset = json::object();
  json counts = json::object();
  for (const auto& [dataset, scores] : by_dataset) {
    const auto fractions = attribute(scores, dataset);
    json f = json::object();
    for (const auto& [ae, frac] : fractions) f[ae] = frac;
    per_dataset[dataset] = f;
    counts[dataset] = scores.size();
  }
  const json out{{"metric_id", rows.front().metric_id},
                 {"per_dataset", per_dataset},
                 {"n", counts}};
  atomic_write(out_path, out.dump(2) + "\n");
  printf("attributed %zu dataset(s); wrote %s\n", by_dataset.size(), out_path.c_str());
  return 0;
}

int run_evaluate(const std::string& scores_path, double fpr, int bins,
                 const std::string& out_path, const std::string& plot_dir) {
  const auto rows = load_scores(scores_path);
  const auto grouped = regroup_scores(rows);
  std::vector<LabeledScore> labeled;
  std::set<std::string> pool_ids;
  for (const auto& [score, meta] : grouped) {
    labeled.push_back({score.min_value, meta.label, meta.dataset});
    for (const auto& [ae, _] : score.per_ae) pool_ids.insert(ae);
  }
  EvalReport rep = build_report(labeled, fpr, bins);
  rep.metric_id = rows.front().metric_id;
  rep.ae_pool.assign(pool_ids.begin(), pool_ids.end());
  rep.metadata = conventions_metadata();
  atomic_write(out_path, rep.to_json().dump(2) + "\n");
  for (const auto& [dataset, ev] : rep.per_dataset)
    printf("%s: ap %.4f tpr@%.0f%%fpr %.4f (n=%d+%d)\n", dataset.c_str(), ev.ap, 100.0 * fpr,
           ev.tpr_at_fpr, ev.n_real, ev.n_generated);
  if (!plot_dir.empty()) {
    std::filesystem::create_directories(plot_dir);
    std::map<std::string, double> aps;
    for (const auto& [dataset, ev] : rep.per_dataset) aps[dataset] = ev.ap;
    plot_bars_png(aps, "ap per dataset", std::filesystem::path(plot_dir) / "ap.png");
    for (const auto& [dataset, h] : rep.histograms)
      plot_histogram_png(h, dataset,
                         std::filesystem::path(plot_dir) / ("hist-" + dataset + ".png"));
  }
  return 0;
}

int run_perturb(const std::string& kind, double strength, uint64_t seed, const std::string& in,
                const std::string& out) {
  PerturbationSpec spec{perturbation_kind_from_name(kind), strength, seed};
  const ImageTensor img = load_image(in);
  const ImageTensor result = perturb(spec, img);
  save_png8(result.px, out);
  printf("%s(%g) %s -> %s\n", kind.c_str(), strength, in.c_str(), out.c_str());
  return 0;
}

int run_sweep(Services& sv, const std::string& manifest_path, const std::string& grid_path,
              const std::string& aes_csv, const std::string& metric_id, double fpr,
              const std::string& out_path) {
  const auto manifest = load_manifest(manifest_path);
  const MetricSpec spec = parse_metric_id(metric_id);
  auto pool = sv.pool(split_csv(aes_csv));
  auto grid = grid_path.empty() ? default_perturbation_grid() : load_perturbation_grid(grid_path);
  if (grid_path.empty() && sv.cfg.seed != 0)
    for (auto& g : grid)
      if (g.kind == PerturbationKind::kNoise) g.seed = sv.cfg.seed;
  SweepReport rep =
      robustness_sweep(manifest, pool, sv.calc, spec, grid, fpr, sv.cache, sv.cfg.workers);
  atomic_write(out_path, rep.to_json().dump(2) + "\n");
  printf("swept %zu grid point(s); wrote %s\n", rep.rows.size(), out_path.c_str());
  return 0;
}

int run_localize(Services& sv, const std::string& ae, const std::string& metric_id,
                 const std::string& in, const std::string& out_map, const std::string& out_raw) {
  const MetricSpec spec = parse_metric_id(metric_id);
  auto backend = sv.registry.get(ae);
  const ImageTensor img = prepare_for_ae(load_image(in));
  const ErrorHeatmap hm = localization_heatmap(*backend, sv.calc, spec, img, sv.cache);
  save_heatmap_png(hm, out_map);
  if (!out_raw.empty()) save_heatmap_raw(hm, out_raw);
  printf("heatmap %s: display range [%g, %g]; wrote %s\n", in.c_str(), hm.norm_lo, hm.norm_hi,
         out_map.c_str());
  return 0;
}

int run_complexity(Services& sv, const std::string& manifest_path, const std::string& aes_csv,
                   const std::string& metric_id, int patch_size, int stride,
                   const std::string& out_path, const std::string& plot_path) {
  const auto manifest = load_manifest(manifest_path);
  const MetricSpec spec = parse_metric_id(metric_id);
  auto pool = sv.pool(split_csv(aes_csv));
  const ComplexityResult res = complexity_scatter(manifest, pool, sv.calc, spec, sv.cache,
                                                  patch_size, stride, sv.cfg.workers);
  std::string lines;
  for (const auto& p : res.points) {
    const json j{{"complexity", p.complexity},
                 {"error", p.error},
                 {"label", label_to_string(p.label)},
                 {"dataset", p.dataset},
                 {"path", p.path},
                 {"row", p.row},
                 {"col", p.col}};
    lines += j.dump() + "\n";
  }
  atomic_write(out_path, lines);
  printf("complexity: %zu patch(es)", res.points.size());
  if (res.rho_real) printf("; real rho %.3f", *res.rho_real);
  if (res.rho_generated) printf("; generated rho %.3f", *res.rho_generated);
  printf("\n");
  if (!plot_path.empty()) {
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : res.points) xy.emplace_back(static_cast<double>(p.complexity), p.error);
    plot_density_png(xy, 1000, "error vs complexity", plot_path);
  }
  return 0;
}

int run_deep(Services& sv, const std::string& ae, std::string denoiser_id, int t, int total,
             const std::string& prompt, const std::string& in, const std::string& out) {
  auto backend = sv.registry.get(ae);
  if (denoiser_id.empty()) {
    if (backend->kind() == "stub")
      denoiser_id = "stub-zero";
    else
      throw UsageError("no denoiser weights available for backend '" + ae +
                       "'; pass --denoiser (stub-zero, stub-mix)");
  }
  const auto denoiser = make_stub_denoiser(denoiser_id);
  const ImageTensor img = prepare_for_ae(load_image(in));
  const ImageTensor rec = deep_reconstruct(*backend, denoiser.get(), img, t, total, prompt);
  save_png16(rec.px, out);
  printf("deep reconstruction t=%d/%d via %s; wrote %s\n", t, total, denoiser_id.c_str(),
         out.c_str());
  return 0;
}

int run_reconstruct(Services& sv, const std::string& ae, const std::string& in,
                    const std::string& out) {
  auto backend = sv.registry.get(ae);
  const ImageTensor img = prepare_for_ae(load_image(in));
  const ImageTensor rec = reconstruct_cached(*backend, img, sv.cache);
  save_png16(rec.px, out);
  printf("reconstructed %s under %s; wrote %s\n", in.c_str(), ae.c_str(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autoencoder reconstruction-error detection for latent-diffusion images"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string cache_flag, weights_flag, device_flag, log_level = "info";
  int workers_flag = -1;
  bool show_version = false;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--cache", cache_flag, "reconstruction cache directory");
  app.add_option("--weights-dir", weights_flag, "weight bundle directory");
  app.add_option("--device", device_flag, "device hint (cpu)");
  app.add_option("--workers", workers_flag, "parallel image workers");
  app.add_option("--log-level", log_level, "debug|info|warn|error");
  app.add_flag("--version", show_version, "print version and exit");
  uint64_t seed_flag = 0;
  bool seed_given = false;
  app.add_option("--seed", seed_flag, "base seed for seeded perturbations")
      ->each([&](const std::string&) { seed_given = true; });

  auto* detect = app.add_subcommand("detect", "score a manifest of images");
  std::string d_manifest, d_aes, d_metric, d_out;
  double d_threshold = NAN;
  detect->add_option("--manifest", d_manifest)->required();
  detect->add_option("--aes", d_aes, "comma-separated backend ids (default: configured pool)");
  detect->add_option("--metric", d_metric, "metric id (default: configured metric)");
  detect->add_option("--threshold", d_threshold);
  detect->add_option("--out", d_out)->required();

  auto* attr = app.add_subcommand("attribute", "argmin attribution from scores");
  std::string a_scores, a_out;
  attr->add_option("--scores", a_scores)->required();
  attr->add_option("--out", a_out)->required();

  auto* eval = app.add_subcommand("evaluate", "ap / tpr@fpr report from scores");
  std::string e_scores, e_out, e_plot_dir;
  double e_fpr = NAN;
  int e_bins = 40;
  eval->add_option("--scores", e_scores)->required();
  eval->add_option("--fpr", e_fpr);
  eval->add_option("--bins", e_bins);
  eval->add_option("--out", e_out)->required();
  eval->add_option("--plot-dir", e_plot_dir);

  auto* metrics = app.add_subcommand("metrics", "metric registry");
  metrics->add_subcommand("list", "list registered metric ids");
  metrics->require_subcommand(1);

  auto* pert = app.add_subcommand("perturb", "apply one perturbation to an image");
  std::string p_kind, p_in, p_out;
  double p_strength = 0.0;
  uint64_t p_seed = 0;
  pert->add_option("--kind", p_kind)->required();
  pert->add_option("--strength", p_strength)->required();
  pert->add_option("--seed", p_seed);
  pert->add_option("--in", p_in)->required();
  pert->add_option("--out", p_out)->required();

  auto* sweep = app.add_subcommand("sweep", "robustness sweep over a perturbation grid");
  std::string s_manifest, s_grid, s_aes, s_metric, s_out;
  double s_fpr = NAN;
  sweep->add_option("--manifest", s_manifest)->required();
  sweep->add_option("--grid", s_grid, "grid json (defaults to the standard grid)");
  sweep->add_option("--aes", s_aes);
  sweep->add_option("--metric", s_metric);
  sweep->add_option("--fpr", s_fpr);
  sweep->add_option("--out", s_out)->required();

  auto* loc = app.add_subcommand("localize", "reconstruction-error heatmap");
  std::string l_ae, l_metric, l_in, l_map, l_raw;
  loc->add_option("--ae", l_ae)->required();
  loc->add_option("--metric", l_metric);
  loc->add_option("--in", l_in)->required();
  loc->add_option("--out-map", l_map)->required();
  loc->add_option("--out-raw", l_raw);

  auto* cx = app.add_subcommand("complexity", "patch complexity vs reconstruction error");
  std::string c_manifest, c_aes, c_metric, c_out, c_plot;
  int c_patch = 128, c_stride = 64;
  cx->add_option("--manifest", c_manifest)->required();
  cx->add_option("--aes", c_aes);
  cx->add_option("--metric", c_metric);
  cx->add_option("--patch-size", c_patch);
  cx->add_option("--stride", c_stride);
  cx->add_option("--out", c_out)->required();
  cx->add_option("--plot", c_plot);

  auto* deep = app.add_subcommand("deep", "deeper reconstruction via ddim inversion");
  std::string dp_ae, dp_denoiser, dp_prompt, dp_in, dp_out;
  int dp_t = 0, dp_total = 50;
  deep->add_option("--ae", dp_ae)->required();
  deep->add_option("--denoiser", dp_denoiser);
  deep->add_option("--t", dp_t)->required();
  deep->add_option("--total", dp_total);
  deep->add_option("--prompt", dp_prompt);
  deep->add_option("--in", dp_in)->required();
  deep->add_option("--out", dp_out)->required();

  auto* rec = app.add_subcommand("reconstruct", "autoencoder round trip of one image");
  std::string r_ae, r_in, r_out;
  rec->add_option("--ae", r_ae)->required();
  rec->add_option("--in", r_in)->required();
  rec->add_option("--out", r_out)->required();

  // global flags (--cache, --weights-dir, ...) may follow the subcommand
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    fprintf(stderr, "%s", app.help().c_str());
    return 1;
  }

  try {
    if (log_level == "debug")
      set_log_level(LogLevel::kDebug);
    else if (log_level == "info")
      set_log_level(LogLevel::kInfo);
    else if (log_level == "warn")
      set_log_level(LogLevel::kWarn);
    else if (log_level == "error")
      set_log_level(LogLevel::kError);
    else
      throw UsageError("unknown log level '" + log_level + "'");

    RunConfig cfg = base_config(config_path);
    if (!cache_flag.empty()) cfg.cache_dir = cache_flag;
    if (!weights_flag.empty()) cfg.weights_dir = weights_flag;
    if (!device_flag.empty()) cfg.device = device_flag;
    if (workers_flag > 0) cfg.workers = workers_flag;
    if (seed_given) cfg.seed = seed_flag;
    if (cfg.device != "cpu")
      AD_WARN("device hint '%s' is not available; running on cpu", cfg.device.c_str());

    auto pool_csv = [&](const std::string& flag) {
      if (!flag.empty()) return flag;
      std::string joined;
      for (const auto& id : cfg.ae_pool) joined += (joined.empty() ? "" : ",") + id;
      return joined;
    };
    auto metric_or_default = [&](const std::string& flag) {
      return flag.empty() ? cfg.metric_id : flag;
    };
    auto fpr_or_default = [&](double flag) { return std::isnan(flag) ? cfg.fpr_level : flag; };

    if (show_version) {
      printf("aerodetect %s\n", kVersion);
      std::error_code ec;
      std::filesystem::directory_iterator it(cfg.weights_dir, ec), end;
      for (; !ec && it != end; it.increment(ec)) {
        if (it->path().extension() != ".abw") continue;
        try {
          const WeightBundle b = WeightBundle::load(it->path());
          printf("  %s: %s\n", it->path().filename().string().c_str(),
                 b.config.value("source", std::string("unknown")).c_str());
        } catch (const std::exception&) {
          printf("  %s: unreadable\n", it->path().filename().string().c_str());
        }
      }
      return 0;
    }
    if (app.get_subcommands().empty()) {
      fprintf(stderr, "%s", app.help().c_str());
      return 1;
    }

    Services sv(cfg);
    if (*detect)
      return run_detect(
          sv, d_manifest, pool_csv(d_aes), metric_or_default(d_metric),
          std::isnan(d_threshold) ? std::nullopt : std::optional<double>(d_threshold), d_out);
    if (*attr) return run_attribute(a_scores, a_out);
    if (*eval) return run_evaluate(e_scores, fpr_or_default(e_fpr), e_bins, e_out, e_plot_dir);
    if (*metrics) {
      for (const auto& id : registered_metric_ids()) printf("%s\n", id.c_str());
      return 0;
    }
    if (*pert) return run_perturb(p_kind, p_strength, p_seed, p_in, p_out);
    if (*sweep)
      return run_sweep(sv, s_manifest, s_grid, pool_csv(s_aes), metric_or_default(s_metric),
                       fpr_or_default(s_fpr), s_out);
    if (*loc) return run_localize(sv, l_ae, metric_or_default(l_metric), l_in, l_map, l_raw);
    if (*cx)
      return run_complexity(sv, c_manifest, pool_csv(c_aes), metric_or_default(c_metric),
                            c_patch, c_stride, c_out, c_plot);
    if (*deep) return run_deep(sv, dp_ae, dp_denoiser, dp_t, dp_total, dp_prompt, dp_in, dp_out);
    if (*rec) return run_reconstruct(sv, r_ae, r_in, r_out);
    fprintf(stderr, "%s", app.help().c_str());
    return 1;
  } catch (const UsageError& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
