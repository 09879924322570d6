// flow: estimate, evaluate, synthesize, train and visualize object-aware optical flow.
#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "oaflow/evaluate.hpp"
#include "oaflow/image_io.hpp"
#include "oaflow/pipeline.hpp"
#include "oaflow/synthetic.hpp"
#include "oaflow/visualize.hpp"

namespace fs = std::filesystem;
using namespace oaflow;

namespace {

PipelineConfig resolve_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (const char* env = std::getenv(kConfigEnv); env && *env) return load_config(env);
  return PipelineConfig{};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

struct EstimateArgs {
  std::string image1, image2, instances, config, checkpoint, out, report;
};

int cmd_estimate(const EstimateArgs& a) {
  PipelineConfig cfg = resolve_config(a.config);
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint configured (set checkpoint = ... or --checkpoint)");
  if (!fs::is_regular_file(cfg.checkpoint)) throw ConfigError("checkpoint not found: " + cfg.checkpoint);
  const NetParams net = load_checkpoint(cfg.checkpoint);
  const Image img1 = load_image(a.image1), img2 = load_image(a.image2);
  const InstanceMap map = a.instances.empty() ? make_instance_map(Raster<int>(img1.width, img1.height, 0))
                                              : load_instance_map(a.instances);
  const PipelineResult res = run(img1, img2, map, net, cfg);
  write_flow_png(res.flow, a.out);
  write_text(a.report.empty() ? a.out + ".report.txt" : a.report, format_run_report(res.report));
  return 0;
}

struct EvalArgs {
  std::string est, gt, gt_noc, instances;
};

int cmd_eval(const EvalArgs& a) {
  const FlowField est = read_flow_png(a.est), gt = read_flow_png(a.gt);
  Mask noc(gt.width(), gt.height(), 0);
  if (a.gt_noc.empty()) {
    noc = gt.valid;
  } else {
    const FlowField n = read_flow_png(a.gt_noc);
    noc = n.valid;
  }
  const InstanceMap map = a.instances.empty() ? make_instance_map(Raster<int>(gt.width(), gt.height(), 0))
                                              : load_instance_map(a.instances);
  std::cout << format_eval_report(evaluate_fl(est, gt, noc, map));
  return 0;
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int width = 256, height = 128, objects = 2;
};

int cmd_synth(const SynthArgs& a) {
  SyntheticSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.focal = 200.0 * a.width / 256.0;
  spec.num_objects = a.objects;
  const SyntheticScene sc = make_synthetic_scene(a.seed, spec);
  fs::create_directories(a.out_dir);
  const fs::path d(a.out_dir);
  save_image((d / "frame1.png").string(), sc.img1, 16);
  save_image((d / "frame2.png").string(), sc.img2, 16);
  write_flow_png(sc.gt, (d / "flow_occ.png").string());
  FlowField noc = sc.gt;
  for (int y = 0; y < noc.height(); ++y)
    for (int x = 0; x < noc.width(); ++x)
      if (!sc.noc(x, y)) noc.invalidate(x, y);
  write_flow_png(noc, (d / "flow_noc.png").string());
  save_instance_map((d / "instances.png").string(), sc.instances);
  save_mask((d / "occlusion.png").string(), sc.occluded);
  return 0;
}

struct TrainArgs {
  std::string out, config;
  int scenes = 4, pixels = 500, layers = 2, filters = 8, iterations = 10000, batch = 128, range = -1;
  double lr = 0.01;
  std::uint64_t seed = 1000;
};

int cmd_train(const TrainArgs& a) {
  const PipelineConfig cfg = resolve_config(a.config);
  const int R = a.range > 0 ? a.range : cfg.patch_range;
  NetSpec spec{std::vector<int>(a.layers, a.filters), true};
  spec.validate();
  std::vector<TrainingExample> data;
  for (int s = 0; s < a.scenes; ++s) {
    const SyntheticScene sc = make_synthetic_scene(a.seed + s);
    auto ex = scene_training_examples(sc, a.pixels, R, spec.receptive_field(), a.seed * 7919 + s);
    data.insert(data.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  if (data.empty()) throw std::runtime_error("no training examples fit the images; lower --range");
  TrainHyperparams hp;
  hp.iterations = a.iterations;
  hp.batch_size = a.batch;
  hp.learning_rate = a.lr;
  hp.seed = a.seed;
  hp.log_every = 500;
  TrainReport rep;
  const NetParams net = train(data, spec, hp, &rep, [](int it, double loss) {
    std::cerr << "iteration " << it << " loss " << loss << "\n";
  });
  save_checkpoint(net, a.out);
  std::cout << "examples " << data.size() << "\nholdout_loss " << rep.initial_holdout_loss << " -> "
            << rep.final_holdout_loss << "\naccuracy " << argmax_accuracy(net, data) << "\n";
  return 0;
}

struct VizArgs {
  std::string flow, out, gt, error_out;
  double max_magnitude = 0.0;
};

int cmd_viz(const VizArgs& a) {
  const FlowField f = read_flow_png(a.flow);
  write_png(a.out, flow_to_color(f, a.max_magnitude));
  if (!a.error_out.empty()) {
    if (a.gt.empty()) throw std::runtime_error("--error-out needs --gt");
    write_png(a.error_out, error_map(f, read_flow_png(a.gt)));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-aware monocular optical flow"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP thread count (0 = runtime default); never changes results");

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Estimate flow between two frames");
  c_est->add_option("--image1", est.image1)->required()->check(CLI::ExistingFile);
  c_est->add_option("--image2", est.image2)->required()->check(CLI::ExistingFile);
  c_est->add_option("--instances", est.instances, "Instance label PNG (0 = background)")->check(CLI::ExistingFile);
  c_est->add_option("--config", est.config, std::string("Config file (default: $") + kConfigEnv + ")");
  c_est->add_option("--checkpoint", est.checkpoint, "Matcher checkpoint; overrides the config");
  c_est->add_option("--out", est.out, "Output flow PNG")->required();
  c_est->add_option("--report", est.report, "Run report path (default: <out>.report.txt)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Fl error of an estimate against ground truth");
  c_eval->add_option("--est", ev.est)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--gt", ev.gt)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--gt-noc", ev.gt_noc, "Non-occluded ground truth (its valid pixels form the noc set)")
      ->check(CLI::ExistingFile);
  c_eval->add_option("--instances", ev.instances)->check(CLI::ExistingFile);

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic scene bundle");
  c_synth->add_option("--seed", sy.seed);
  c_synth->add_option("--out-dir", sy.out_dir);
  c_synth->add_option("--width", sy.width);
  c_synth->add_option("--height", sy.height);
  c_synth->add_option("--objects", sy.objects);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the matcher on synthetic scenes");
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--config", tr.config);
  c_train->add_option("--scenes", tr.scenes);
  c_train->add_option("--pixels", tr.pixels, "Pixels drawn per scene (two examples each)");
  c_train->add_option("--layers", tr.layers);
  c_train->add_option("--filters", tr.filters);
  c_train->add_option("--iterations", tr.iterations);
  c_train->add_option("--batch", tr.batch);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--range", tr.range, "Strip range R (default: config patch_range)");
  c_train->add_option("--seed", tr.seed, "First scene seed");

  VizArgs vz;
  auto* c_viz = app.add_subcommand("viz", "Render a flow PNG as a color wheel and optional error map");
  c_viz->add_option("--flow", vz.flow)->required()->check(CLI::ExistingFile);
  c_viz->add_option("--out", vz.out)->required();
  c_viz->add_option("--gt", vz.gt)->check(CLI::ExistingFile);
  c_viz->add_option("--error-out", vz.error_out);
  c_viz->add_option("--max-magnitude", vz.max_magnitude);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (c_est->parsed()) return cmd_estimate(est);
    if (c_eval->parsed()) return cmd_eval(ev);
    if (c_synth->parsed()) return cmd_synth(sy);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_viz->parsed()) return cmd_viz(vz);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
