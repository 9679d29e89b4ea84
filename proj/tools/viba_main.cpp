// viba command line: synth, train, stats, attribute, flow, metrics, e2e.

#include <omp.h>

#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "viba/app/commands.hpp"
#include "viba/error.hpp"
#include "viba/strings.hpp"

namespace app = viba::app;

int main(int argc, char** argv) {
  CLI::App cli{"Video information bottleneck attribution"};
  cli.require_subcommand(1);
  cli.fallthrough();

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::string> overrides;
  cli.add_option("--config", config_path, "Config file of 'key = value' lines");
  cli.add_option("--seed", seed, "Run seed (overrides the config)");
  cli.add_option("--workers", workers, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);
  cli.add_option("--out", out_dir, "Output directory");
  cli.add_option("--set", overrides, "Extra 'key=value' overrides, applied after the config file");

  std::string synth_kind = "spatial";
  std::optional<std::size_t> synth_count;
  auto* synth = cli.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--kind", synth_kind, "spatial or temporal");
  synth->add_option("--count", synth_count, "Number of samples");

  std::string data_dir, model_kind, weights, layer, stats_path, sweep;
  auto* train = cli.add_subcommand("train", "Train a toy model on a synthetic dataset");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--model", model_kind, "toy-xception or toy-vgg")->required();

  auto* stats = cli.add_subcommand("stats", "Estimate activation statistics at the bottleneck layer");
  stats->add_option("--data", data_dir, "Dataset directory")->required();
  stats->add_option("--weights", weights, "Weights file")->required();
  stats->add_option("--model", model_kind, "toy-xception or toy-vgg")->required();
  stats->add_option("--layer", layer, "Injection point (default: model default)");

  std::string frames_dir;
  auto* attribute = cli.add_subcommand("attribute", "Capacity maps for a frame directory");
  attribute->add_option("--frames", frames_dir, "Directory of frame_NNNN.ppm files")->required();
  attribute->add_option("--weights", weights, "Weights file")->required();
  attribute->add_option("--model", model_kind, "toy-xception or toy-vgg")->required();
  attribute->add_option("--layer", layer, "Injection point (default: model default)");
  attribute->add_option("--sweep", sweep, "Comma-separated injection points, one subdirectory each");
  attribute->add_option("--stats", stats_path, "Stats file from 'stats' (default: estimate from the frames)");

  auto* flow = cli.add_subcommand("flow", "Farneback flow between keyframe pairs");
  flow->add_option("--frames", frames_dir, "Directory of frame_NNNN.ppm files")->required();

  app::MetricsOptions mopt;
  std::string maps_dir, labels, annotations, taxonomy, masks;
  auto* metrics = cli.add_subcommand("metrics", "Consistency, agreement and calibration reports");
  metrics->add_option("--maps", maps_dir, "Directory of capacity maps (one subdirectory per video)")->required();
  metrics->add_option("--labels", labels, "labels.csv giving each video's class");
  metrics->add_option("--annotations", annotations, "Annotations CSV (video_id,annotator_id,region_code)");
  metrics->add_option("--taxonomy", taxonomy, "Directory with <video>/taxonomy.pgm");
  metrics->add_option("--masks", masks, "Directory with <video>/mask.pgm");

  auto* e2e = cli.add_subcommand("e2e", "Full synthetic pipeline with acceptance checks");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kExitConfig;
  }

  return app::run_guarded(
      [&]() -> int {
        app::Context ctx;
        if (!config_path.empty()) ctx.config.load_file(config_path);
        for (const auto& kv : overrides) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw viba::config_error("--set expects key=value, got '" + kv + "'");
          ctx.config.set(std::string(viba::trim(kv.substr(0, eq))), kv.substr(eq + 1));
        }
        if (seed) ctx.config.set("seed", std::to_string(*seed));
        ctx.workers = workers;
        ctx.log = &std::cout;
        omp_set_num_threads(static_cast<int>(workers));
        const auto needs_out = [&]() {
          if (out_dir.empty()) throw viba::config_error("--out is required for this command");
          ctx.out = out_dir;
        };

        if (*synth) {
          needs_out();
          return app::cmd_synth(ctx, synth_kind, synth_count);
        }
        if (*train) {
          needs_out();
          return app::cmd_train(ctx, data_dir, model_kind);
        }
        if (*stats) {
          needs_out();
          return app::cmd_stats(ctx, data_dir, weights, model_kind, layer);
        }
        if (*attribute) {
          needs_out();
          app::AttributeOptions opt;
          opt.frames_dir = frames_dir;
          opt.weights = weights;
          opt.model_kind = model_kind;
          opt.layer = layer;
          opt.stats = stats_path;
          if (!sweep.empty()) {
            for (const auto& l : viba::split(sweep, ','))
              if (!viba::trim(l).empty()) opt.sweep.emplace_back(viba::trim(l));
            if (!layer.empty()) throw viba::config_error("--layer and --sweep are mutually exclusive");
          }
          return app::cmd_attribute(ctx, opt);
        }
        if (*flow) {
          needs_out();
          return app::cmd_flow(ctx, frames_dir);
        }
        if (*metrics) {
          needs_out();
          mopt.maps_dir = maps_dir;
          mopt.labels = labels;
          mopt.annotations = annotations;
          mopt.taxonomy_dir = taxonomy;
          mopt.masks_dir = masks;
          return app::cmd_metrics(ctx, mopt);
        }
        if (*e2e) {
          if (out_dir.empty()) out_dir = "e2e_out";
          ctx.out = out_dir;
          return app::cmd_e2e(ctx);
        }
        return app::kExitConfig;
      },
      std::cerr);
}
