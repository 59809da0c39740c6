#include "leafseg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "leafseg/experiments.hpp"
#include "leafseg/fixture.hpp"
#include "leafseg/metrics.hpp"
#include "leafseg/mlp.hpp"
#include "leafseg/rng.hpp"

namespace leafseg::cli {

namespace {

FilterMask mask_from_flags(const std::string& combo, const std::string& kind,
                           int order) {
  MaskKind mask_kind = MaskKind::simple;
  int mask_order = order;
  if (!combo.empty()) {
    const ComboSpec spec = parse_combo_name(combo);
    mask_kind = spec.filter_kind;
    mask_order = spec.mask_order;
  } else {
    if (kind == "simple")
      mask_kind = MaskKind::simple;
    else if (kind == "weighted")
      mask_kind = MaskKind::weighted;
    else
      throw std::invalid_argument("unknown mask kind: " + kind +
                                  " (expected simple or weighted)");
  }
  std::string warning;
  const FilterMask mask = build_mask(mask_kind, mask_order, &warning);
  if (!warning.empty()) std::cerr << "leafseg: warning: " << warning << "\n";
  return mask;
}

struct StageCli {
  std::string in;
  std::string out;
  std::string config;
  std::uint32_t seed = 0;
  int epochs = 0;
  int jobs = 0;
  int classes = 0;
  double fraction = 0.0;
  bool wall_times = false;
  std::string task = "all";    // stage 4 only
  std::string image_dir;       // stage 4 only
};

void add_stage_flags(CLI::App* sub, StageCli& args, bool stage4) {
  sub->add_option("--in", args.in, "source image (portable pixmap)")->required();
  sub->add_option("--out", args.out, "output CSV report")->required();
  sub->add_option("--config", args.config, "key=value configuration file");
  sub->add_option("--seed", args.seed, "master seed (default 42)");
  sub->add_option("--epochs", args.epochs, "training epochs per simulation");
  sub->add_option("--jobs", args.jobs, "worker cap for independent simulations");
  sub->add_option("--classes", args.classes, "threshold classes for the target image");
  sub->add_option("--fraction", args.fraction, "training-pixel fraction");
  sub->add_flag("--wall-times", args.wall_times,
                "write measured runtimes (breaks byte-reproducibility)");
  if (stage4) {
    sub->add_option("--task", args.task, "all, filters, afs or awfs");
    sub->add_option("--images", args.image_dir, "directory for output images");
  }
}

StageOptions resolve_stage_options(const CLI::App* sub, const StageCli& args) {
  StageOptions opt;
  if (!args.config.empty()) opt = load_stage_options(args.config, opt);
  if (sub->count("--seed")) opt.seed = args.seed;
  if (sub->count("--epochs")) opt.epochs = args.epochs;
  if (sub->count("--jobs")) opt.jobs = args.jobs;
  if (sub->count("--classes")) opt.num_classes = args.classes;
  if (sub->count("--fraction")) opt.sample_fraction = args.fraction;
  if (args.wall_times) opt.wall_times = true;
  const CLI::Option* images = sub->get_option_no_throw("--images");
  if (images != nullptr && images->count() > 0) opt.image_dump_dir = args.image_dir;
  return opt;
}

void finish_report(ExperimentReport report, const StageCli& args) {
  report.config_echo.emplace(report.config_echo.begin(),
                             std::make_pair(std::string("output"), args.out));
  report.config_echo.emplace(report.config_echo.begin(),
                             std::make_pair(std::string("input"), args.in));
  write_report(report, args.out);
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"leaf-image segmentation and filtering workbench"};
  app.require_subcommand(1);

  int exit_code = 0;

  // fixture ------------------------------------------------------------
  auto* fixture = app.add_subcommand("fixture", "write the synthetic leaf image");
  struct {
    std::string out;
    int width = 320, height = 240;
    std::uint32_t seed = 7;
    bool ascii = false;
  } fixture_args;
  fixture->add_option("--out", fixture_args.out, "output image path")->required();
  fixture->add_option("--width", fixture_args.width, "image width");
  fixture->add_option("--height", fixture_args.height, "image height");
  fixture->add_option("--seed", fixture_args.seed, "jitter seed");
  fixture->add_flag("--ascii", fixture_args.ascii, "write ASCII instead of binary");
  fixture->callback([&] {
    save_image(make_leaf_fixture(fixture_args.width, fixture_args.height,
                                 fixture_args.seed),
               fixture_args.out,
               fixture_args.ascii ? PnmEncoding::ascii : PnmEncoding::binary);
  });

  // otsu ----------------------------------------------------------------
  auto* otsu = app.add_subcommand("otsu", "print thresholds; optionally write a mask");
  struct {
    std::string in, out;
    int classes = 2;
    int keep_class = -1;
    int target_tone = 255;
  } otsu_args;
  otsu->add_option("--in", otsu_args.in, "input image")->required();
  otsu->add_option("--out", otsu_args.out, "0/255 mask of the kept class");
  otsu->add_option("--classes", otsu_args.classes, "2 or 3 classes");
  otsu->add_option("--keep-class", otsu_args.keep_class,
                   "class to keep (-1 picks the class nearest --target-tone)");
  otsu->add_option("--target-tone", otsu_args.target_tone,
                   "gray tone used by automatic class choice");
  otsu->callback([&] {
    const RasterImage gray = to_grayscale(load_image(otsu_args.in));
    const Histogram hist = histogram(gray);
    const std::vector<int> thresholds = otsu_thresholds(hist, otsu_args.classes);
    std::cout << "thresholds";
    for (const int t : thresholds) std::cout << ' ' << t;
    std::cout << "\n";
    if (!otsu_args.out.empty()) {
      const int keep = otsu_args.keep_class >= 0
                           ? otsu_args.keep_class
                           : choose_keep_class(hist, thresholds, otsu_args.target_tone);
      save_image(mask_to_image(apply_threshold_select(gray, thresholds, keep)),
                 otsu_args.out);
    }
  });

  // filter ---------------------------------------------------------------
  auto* filter = app.add_subcommand("filter", "apply a smoothing mask");
  struct {
    std::string in, out, combo, kind = "simple";
    int order = 3;
    bool ascii = false;
  } filter_args;
  filter->add_option("--in", filter_args.in, "input image")->required();
  filter->add_option("--out", filter_args.out, "output image")->required();
  filter->add_option("--combo", filter_args.combo,
                     "combination name; only its filter part is used");
  filter->add_option("--kind", filter_args.kind, "simple or weighted");
  filter->add_option("--order", filter_args.order, "odd mask order");
  filter->add_flag("--ascii", filter_args.ascii, "write ASCII instead of binary");
  filter->callback([&] {
    const FilterMask mask =
        mask_from_flags(filter_args.combo, filter_args.kind, filter_args.order);
    save_image(apply_linear_filter(load_image(filter_args.in), mask), filter_args.out,
               filter_args.ascii ? PnmEncoding::ascii : PnmEncoding::binary);
  });

  // noise ------------------------------------------------------------------
  auto* noise = app.add_subcommand("noise", "inject impulsive noise");
  struct {
    std::string in, out, mode = "ALL";
    double density = 0.1;
    std::uint32_t seed = 42;
  } noise_args;
  noise->add_option("--in", noise_args.in, "input image")->required();
  noise->add_option("--out", noise_args.out, "output image")->required();
  noise->add_option("--density", noise_args.density, "corrupted-pixel fraction");
  noise->add_option("--mode", noise_args.mode, "R, G, B or ALL");
  noise->add_option("--seed", noise_args.seed, "noise seed");
  noise->callback([&] {
    NoiseSpec spec;
    spec.density = noise_args.density;
    spec.channel_mode = parse_noise_channel(noise_args.mode);
    spec.seed = noise_args.seed;
    save_image(inject_salt_pepper(load_image(noise_args.in), spec), noise_args.out);
  });

  // desirable ---------------------------------------------------------------
  auto* desirable = app.add_subcommand("desirable", "build a training-target image");
  struct {
    std::string in, out, prefilter, neighbor = "WN";
    int classes = 3;
    int keep_class = -1;
    int target_tone = 255;
    int erosion = 0;
  } desirable_args;
  desirable->add_option("--in", desirable_args.in, "source image")->required();
  desirable->add_option("--out", desirable_args.out, "target image (graymap)")
      ->required();
  desirable->add_option("--classes", desirable_args.classes, "2 or 3 classes");
  desirable->add_option("--keep-class", desirable_args.keep_class,
                        "class to keep (-1 picks the class nearest --target-tone)");
  desirable->add_option("--target-tone", desirable_args.target_tone,
                        "gray tone used by automatic class choice");
  desirable->add_option("--neighbor", desirable_args.neighbor, "WN, N4 or N8");
  desirable->add_option("--erosion", desirable_args.erosion,
                        "erosion order (0 for none)");
  desirable->add_option("--prefilter", desirable_args.prefilter,
                        "combination name; its filter is applied first");
  desirable->callback([&] {
    DesirableSpec spec;
    spec.num_classes = desirable_args.classes;
    spec.keep_class = desirable_args.keep_class;
    spec.target_tone = desirable_args.target_tone;
    spec.neighbor = parse_neighbor_mode(desirable_args.neighbor);
    spec.erosion_order = desirable_args.erosion;
    const RasterImage source = load_image(desirable_args.in);
    if (desirable_args.prefilter.empty()) {
      save_image(build_desirable(source, spec), desirable_args.out);
    } else {
      const FilterMask mask = mask_from_flags(desirable_args.prefilter, "", 0);
      save_image(build_desirable(source, spec, &mask), desirable_args.out);
    }
  });

  // train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "fit a network and save it");
  struct {
    std::string in, desirable, out_net, curve, variant = "RGB3";
    int qnhl = 4;
    double rl = 0.01;
    double cm = 0.9;
    int epochs = 100;
    std::uint32_t seed = 42;
    double fraction = kDefaultSampleFraction;
  } train_args;
  train_cmd->add_option("--in", train_args.in, "source image")->required();
  train_cmd->add_option("--desirable", train_args.desirable, "target image (graymap)")
      ->required();
  train_cmd->add_option("--out-net", train_args.out_net, "network parameter file")
      ->required();
  train_cmd->add_option("--curve", train_args.curve, "per-epoch error CSV");
  train_cmd->add_option("--variant", train_args.variant,
                        "RGB3, RGB_HIST4, ISP_GRAY3, HIST_GRAY2 or GRAY1");
  train_cmd->add_option("--qnhl", train_args.qnhl, "hidden-layer neurons");
  train_cmd->add_option("--rl", train_args.rl, "learning rate");
  train_cmd->add_option("--cm", train_args.cm, "momentum constant");
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
  train_cmd->add_option("--seed", train_args.seed, "master seed");
  train_cmd->add_option("--fraction", train_args.fraction, "training-pixel fraction");
  train_cmd->callback([&] {
    const RasterImage source = load_image(train_args.in);
    const RasterImage target = load_image(train_args.desirable);
    if (target.channels != 1)
      throw std::invalid_argument("train: the target image must be single-channel");
    if (target.width != source.width || target.height != source.height)
      throw std::invalid_argument("train: source and target dimensions differ");

    const FeatureVariant variant = parse_feature_variant(train_args.variant);
    const PixelFeatureSet features = extract_features(source, variant);
    const SampledDataset dataset =
        sample_training_set(source.width, source.height, train_args.fraction,
                            derive_seed(train_args.seed, 500));

    Eigen::MatrixXd inputs(features.vectors.rows(),
                           static_cast<Eigen::Index>(dataset.training.size()));
    Eigen::MatrixXd targets(1, static_cast<Eigen::Index>(dataset.training.size()));
    const Eigen::ArrayXd target_norm = normalize(target).values;
    for (std::size_t i = 0; i < dataset.training.size(); ++i) {
      inputs.col(static_cast<Eigen::Index>(i)) =
          features.vectors.col(dataset.training[i]);
      targets(0, static_cast<Eigen::Index>(i)) = target_norm[dataset.training[i]];
    }

    TrainConfig cfg;
    cfg.learning_rate = train_args.rl;
    cfg.momentum = train_args.cm;
    cfg.epochs = train_args.epochs;
    cfg.seed = derive_seed(train_args.seed, 1);
    Network net = init_network(
        std::vector<int>{static_cast<int>(features.vectors.rows()), train_args.qnhl, 1},
        cfg.seed);
    const LearningCurve curve = train(net, inputs, targets, cfg);
    save_network(net, std::filesystem::path(train_args.out_net));

    if (!train_args.curve.empty()) {
      std::ofstream out(train_args.curve, std::ios::trunc);
      if (!out)
        throw std::runtime_error("cannot open curve file: " + train_args.curve);
      out << "epoch,mse\n";
      for (std::size_t e = 0; e < curve.size(); ++e) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%zu,%.8f\n", e + 1, curve[e]);
        out << buf;
      }
    }
  });

  // segment -------------------------------------------------------------
  auto* segment = app.add_subcommand("segment", "run a saved network over an image");
  struct {
    std::string net, in, out, variant = "RGB3";
  } segment_args;
  segment->add_option("--net", segment_args.net, "network parameter file")->required();
  segment->add_option("--in", segment_args.in, "input image")->required();
  segment->add_option("--out", segment_args.out, "output image")->required();
  segment->add_option("--variant", segment_args.variant, "feature layout of the net");
  segment->callback([&] {
    const Network net = load_network(std::filesystem::path(segment_args.net));
    const RasterImage source = load_image(segment_args.in);
    const PixelFeatureSet features =
        extract_features(source, parse_feature_variant(segment_args.variant));
    save_image(reconstruct(predict_image(net, features)), segment_args.out);
  });

  // stages -------------------------------------------------------------
  StageCli stage1_args, stage2_args, stage3_args, stage4_args;
  auto* stage1 = app.add_subcommand("stage1", "parameter sweep report");
  add_stage_flags(stage1, stage1_args, false);
  stage1->callback([&] {
    finish_report(run_stage1(load_image(stage1_args.in),
                             resolve_stage_options(stage1, stage1_args)),
                  stage1_args);
  });

  auto* stage2 = app.add_subcommand("stage2", "combination grid report");
  add_stage_flags(stage2, stage2_args, false);
  stage2->callback([&] {
    finish_report(run_stage2(load_image(stage2_args.in),
                             resolve_stage_options(stage2, stage2_args)),
                  stage2_args);
  });

  auto* stage3 = app.add_subcommand("stage3", "input-variant sweep report");
  add_stage_flags(stage3, stage3_args, false);
  stage3->callback([&] {
    finish_report(run_stage3(load_image(stage3_args.in),
                             resolve_stage_options(stage3, stage3_args)),
                  stage3_args);
  });

  auto* stage4 = app.add_subcommand("stage4", "noise-robustness report");
  add_stage_flags(stage4, stage4_args, true);
  stage4->callback([&] {
    finish_report(run_stage4(load_image(stage4_args.in),
                             parse_stage4_task(stage4_args.task),
                             resolve_stage_options(stage4, stage4_args)),
                  stage4_args);
  });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "leafseg: error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace leafseg::cli
