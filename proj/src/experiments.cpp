#include "leafseg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "leafseg/metrics.hpp"
#include "leafseg/mlp.hpp"
#include "leafseg/rng.hpp"

namespace leafseg {

// ---------------------------------------------------------------------------
// combination names

namespace {

class NameScanner {
 public:
  explicit NameScanner(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= text_.size(); }

  bool accept(std::string_view token) {
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  int read_int(const char* what) {
    if (done() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
      throw ParseError(std::string("expected ") + what + " in combination name", pos_);
    int value = 0;
    while (!done() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      if (value > 999)
        throw ParseError(std::string(what) + " out of range in combination name", pos_);
      ++pos_;
    }
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

ComboSpec parse_combo_name(std::string_view name) {
  NameScanner scan(name);
  ComboSpec spec;
  if (scan.accept("MW"))
    spec.filter_kind = MaskKind::weighted;
  else if (scan.accept("M"))
    spec.filter_kind = MaskKind::simple;
  else
    throw ParseError("expected filter token M or MW", scan.pos());
  spec.mask_order = scan.read_int("mask order");
  if (spec.mask_order % 2 == 0 || spec.mask_order < 1)
    throw ParseError("mask order must be odd", scan.pos());

  if (scan.accept("WN"))
    spec.neighbor = NeighborMode::none;
  else if (scan.accept("N4"))
    spec.neighbor = NeighborMode::v4;
  else if (scan.accept("N8"))
    spec.neighbor = NeighborMode::v8;
  else
    throw ParseError("expected neighbor token WN, N4 or N8", scan.pos());

  if (scan.accept("WE")) {
    spec.erosion_order = 0;
  } else if (scan.accept("E")) {
    spec.erosion_order = scan.read_int("erosion order");
    if (spec.erosion_order % 2 == 0 || spec.erosion_order < 1)
      throw ParseError("erosion order must be odd", scan.pos());
  } else {
    throw ParseError("expected erosion token WE or E<order>", scan.pos());
  }
  if (!scan.done())
    throw ParseError("trailing characters after combination name", scan.pos());
  return spec;
}

std::string format_combo_name(const ComboSpec& spec) {
  std::string out = spec.filter_kind == MaskKind::weighted ? "MW" : "M";
  out += std::to_string(spec.mask_order);
  switch (spec.neighbor) {
    case NeighborMode::none: out += "WN"; break;
    case NeighborMode::v4: out += "N4"; break;
    case NeighborMode::v8: out += "N8"; break;
  }
  if (spec.erosion_order == 0)
    out += "WE";
  else
    out += "E" + std::to_string(spec.erosion_order);
  return out;
}

std::vector<ComboSpec> standard_combo_grid() {
  std::vector<ComboSpec> grid;
  const auto push_kind = [&grid](MaskKind kind, std::initializer_list<int> orders) {
    for (const int order : orders)
      for (const NeighborMode neighbor :
           {NeighborMode::none, NeighborMode::v4, NeighborMode::v8})
        for (const int erosion : {0, 3, 5, 11})
          grid.push_back(ComboSpec{kind, order, neighbor, erosion});
  };
  push_kind(MaskKind::simple, {3, 5, 7, 9, 11, 15, 35});
  push_kind(MaskKind::weighted, {3, 5, 7, 9, 11});
  return grid;
}

// ---------------------------------------------------------------------------
// sampling

SampledDataset sample_training_set(int width, int height, double fraction,
                                   std::uint32_t seed) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("sample_training_set: empty image");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("sample_training_set: fraction must be in (0, 1)");
  const std::int64_t pixels = std::int64_t{width} * height;
  const std::int32_t n = static_cast<std::int32_t>(
      std::floor(fraction * static_cast<double>(pixels) + 0.5));
  if (n <= 0 || n >= pixels)
    throw std::invalid_argument(
        "sample_training_set: fraction leaves no training or no holdout pixels");

  std::mt19937 gen(seed);
  SampledDataset ds;
  ds.seed = seed;
  ds.training =
      sample_without_replacement(static_cast<std::int32_t>(pixels), n, gen);
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(pixels), 0);
  for (const std::int32_t i : ds.training) taken[static_cast<std::size_t>(i)] = 1;
  ds.holdout.reserve(static_cast<std::size_t>(pixels - n));
  for (std::int32_t i = 0; i < pixels; ++i)
    if (!taken[static_cast<std::size_t>(i)]) ds.holdout.push_back(i);
  return ds;
}

const char* to_string(DesirableKind kind) {
  return kind == DesirableKind::seed ? "Seed" : "NSeed";
}

// ---------------------------------------------------------------------------
// report rendering

namespace {

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_phe(double v) { return fmt("%.2f", v); }
std::string fmt_mse(double v) { return fmt("%.5f", v); }
std::string fmt_runtime(double v, bool wall) { return fmt("%.2f", wall ? v : 0.0); }
std::string fmt_rate(double v) { return fmt("%g", v); }

}  // namespace

std::string render_report(const ExperimentReport& report) {
  std::ostringstream out;
  out << "# leafseg report\n";
  out << "# stage=" << report.stage << "\n";
  for (const auto& [key, value] : report.config_echo)
    out << "# " << key << "=" << value << "\n";

  const auto row = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };

  if (report.stage == "stage1") {
    row({"id", "desirable", "qnhl", "rl", "cm", "epochs", "phe_percent", "mse",
         "runtime_s"});
    for (const SimulationRecord& r : report.records)
      row({std::to_string(r.id), to_string(r.desirable_kind), std::to_string(r.qnhl),
           fmt_rate(r.rl), fmt_rate(r.cm), std::to_string(r.epochs),
           fmt_phe(r.phe_percent), fmt_mse(r.mse),
           fmt_runtime(r.runtime_seconds, report.wall_times)});
  } else if (report.stage == "stage2") {
    row({"id", "combo", "desirable", "phe_percent", "mse", "runtime_s"});
    for (const SimulationRecord& r : report.records)
      row({std::to_string(r.id), r.label, to_string(r.desirable_kind),
           fmt_phe(r.phe_percent), fmt_mse(r.mse),
           fmt_runtime(r.runtime_seconds, report.wall_times)});
  } else if (report.stage == "stage3") {
    row({"id", "variant", "qnhl", "rl", "cm", "epochs", "phe_percent", "mse",
         "runtime_s"});
    for (const SimulationRecord& r : report.records)
      row({std::to_string(r.id), to_string(r.variant), std::to_string(r.qnhl),
           fmt_rate(r.rl), fmt_rate(r.cm), std::to_string(r.epochs),
           fmt_phe(r.phe_percent), fmt_mse(r.mse),
           fmt_runtime(r.runtime_seconds, report.wall_times)});
  } else if (report.stage == "stage4") {
    row({"row", "sim", "table", "phe_percent", "mse", "runtime_s", "pct0", "pct5",
         "pct10", "pct15", "pct20", "pct25", "pct30", "average"});
    for (const SimulationRecord& r : report.records)
      row({"record", r.label, "", fmt_phe(r.phe_percent), fmt_mse(r.mse),
           fmt_runtime(r.runtime_seconds, report.wall_times), "", "", "", "", "", "",
           "", ""});
    for (const AggregateRow& a : report.aggregates) {
      std::vector<std::string> cells = {"aggregate", a.sim, a.table, "", "", ""};
      for (const double v : a.by_density) cells.push_back(fmt_phe(v));
      cells.push_back(fmt_phe(a.average));
      row(cells);
    }
  } else {
    throw std::invalid_argument("render_report: unknown stage tag " + report.stage);
  }
  return out.str();
}

std::size_t write_report(const ExperimentReport& report,
                         const std::filesystem::path& path) {
  const std::string text = render_report(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open report file: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return text.size();
}

// ---------------------------------------------------------------------------
// shared stage machinery

DesirableSpec stage_desirable_spec(const StageOptions& opt, DesirableKind kind) {
  DesirableSpec spec;
  spec.num_classes = opt.num_classes;
  spec.keep_class = opt.keep_class;
  spec.target_tone = opt.target_tone;
  spec.neighbor = opt.desirable_neighbor;
  spec.erosion_order = kind == DesirableKind::seed ? opt.seed_erosion_order : 0;
  return spec;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  if (jobs > n) jobs = n;
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m,
                               const std::vector<std::int32_t>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

Eigen::ArrayXd gather_values(const Eigen::ArrayXd& v,
                             const std::vector<std::int32_t>& idx) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

// 1 x n training-target matrix from a gray target image.
Eigen::MatrixXd target_row(const Eigen::ArrayXd& desirable_norm,
                           const std::vector<std::int32_t>& idx) {
  Eigen::MatrixXd out(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out(0, static_cast<Eigen::Index>(i)) = desirable_norm[idx[i]];
  return out;
}

struct SegScore {
  RasterImage output;
  double phe = 0.0;
  double holdout_mse = 0.0;
};

// Train a segmentation network and score it against its target image.
SegScore run_segmentation_sim(const PixelFeatureSet& features,
                              const Eigen::MatrixXd& train_inputs,
                              const Eigen::MatrixXd& train_targets,
                              const RasterImage& desirable,
                              const Eigen::ArrayXd& desirable_norm,
                              const std::vector<std::int32_t>& holdout, int qnhl,
                              const TrainConfig& cfg) {
  const std::vector<int> layers = {static_cast<int>(features.vectors.rows()), qnhl, 1};
  Network net = init_network(layers, cfg.seed);
  train(net, train_inputs, train_targets, cfg);

  const NormalizedPlane plane = predict_image(net, features);
  SegScore score;
  score.output = reconstruct(plane);
  score.phe = percent_hits(score_hits(score.output, desirable, kSegmentationMargin));
  score.holdout_mse = validation_mse(gather_values(plane.values, holdout),
                                     gather_values(desirable_norm, holdout));
  return score;
}

void sort_by_phe(std::vector<SimulationRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const SimulationRecord& a, const SimulationRecord& b) {
              if (a.phe_percent != b.phe_percent) return a.phe_percent > b.phe_percent;
              if (a.mse != b.mse) return a.mse < b.mse;
              return a.id < b.id;
            });
}

std::string list_to_string(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt_rate(values[i]);
  }
  return out;
}

void echo_common_options(ExperimentReport& report, const StageOptions& opt) {
  report.config_echo.emplace_back("seed", std::to_string(opt.seed));
  report.config_echo.emplace_back("epochs", std::to_string(opt.epochs));
  report.config_echo.emplace_back("classes", std::to_string(opt.num_classes));
  report.config_echo.emplace_back("keep_class", std::to_string(opt.keep_class));
  report.config_echo.emplace_back("neighbor", to_string(opt.desirable_neighbor));
  report.config_echo.emplace_back("seed_erosion",
                                  std::to_string(opt.seed_erosion_order));
  report.config_echo.emplace_back("fraction", fmt("%.10g", opt.sample_fraction));
}

}  // namespace

// ---------------------------------------------------------------------------
// stage 1

ExperimentReport run_stage1(const RasterImage& source, const StageOptions& opt) {
  if (source.channels != 3)
    throw std::invalid_argument("run_stage1: expected a 3-channel source image");

  const PixelFeatureSet features = extract_features(source, FeatureVariant::rgb3);
  const SampledDataset dataset = sample_training_set(
      source.width, source.height, opt.sample_fraction, derive_seed(opt.seed, 500));
  const Eigen::MatrixXd train_inputs = gather_columns(features.vectors, dataset.training);

  struct Target {
    RasterImage image;
    Eigen::ArrayXd norm;
    Eigen::MatrixXd train;
  };
  std::map<DesirableKind, Target> targets;
  for (const DesirableKind kind : {DesirableKind::seed, DesirableKind::nseed}) {
    Target t;
    t.image = build_desirable(source, stage_desirable_spec(opt, kind));
    t.norm = normalize(t.image).values;
    t.train = target_row(t.norm, dataset.training);
    targets.emplace(kind, std::move(t));
  }

  struct SimPlan {
    int id;
    DesirableKind kind;
    double rl, cm;
    int qnhl;
  };
  std::vector<SimPlan> plans;
  int id = 1;
  for (const DesirableKind kind : {DesirableKind::seed, DesirableKind::nseed})
    for (const double cm : opt.cm_grid)
      for (const double rl : opt.rl_grid)
        plans.push_back(SimPlan{id++, kind, rl, cm, opt.best_qnhl});

  const auto run_plan = [&](const SimPlan& plan) {
    const Clock::time_point start = Clock::now();
    const Target& target = targets.at(plan.kind);
    TrainConfig cfg;
    cfg.learning_rate = plan.rl;
    cfg.momentum = plan.cm;
    cfg.epochs = opt.epochs;
    cfg.seed = derive_seed(opt.seed, 100 + static_cast<std::uint64_t>(plan.id));
    const SegScore score =
        run_segmentation_sim(features, train_inputs, target.train, target.image,
                             target.norm, dataset.holdout, plan.qnhl, cfg);
    SimulationRecord record;
    record.id = plan.id;
    record.desirable_kind = plan.kind;
    record.qnhl = plan.qnhl;
    record.rl = plan.rl;
    record.cm = plan.cm;
    record.epochs = opt.epochs;
    record.phe_percent = score.phe;
    record.mse = score.holdout_mse;
    record.runtime_seconds = seconds_since(start);
    return record;
  };

  std::vector<SimulationRecord> block_a(plans.size());
  parallel_for(static_cast<int>(plans.size()), opt.jobs,
               [&](int i) { block_a[static_cast<std::size_t>(i)] = run_plan(plans[static_cast<std::size_t>(i)]); });

  // ranking by hit percentage; by validation error as the alternate view
  std::vector<SimulationRecord> by_mse = block_a;
  std::sort(by_mse.begin(), by_mse.end(),
            [](const SimulationRecord& a, const SimulationRecord& b) {
              if (a.mse != b.mse) return a.mse < b.mse;
              return a.id < b.id;
            });
  sort_by_phe(block_a);

  const std::size_t best_count = std::min<std::size_t>(6, block_a.size());
  std::vector<SimPlan> extra_plans;
  int extra_id = static_cast<int>(plans.size()) + 1;
  for (std::size_t r = 0; r < best_count; ++r)
    for (const int qnhl : opt.extra_qnhl) {
      const SimulationRecord& base = block_a[r];
      extra_plans.push_back(SimPlan{extra_id++, base.desirable_kind, base.rl, base.cm, qnhl});
    }

  std::vector<SimulationRecord> block_b(extra_plans.size());
  parallel_for(static_cast<int>(extra_plans.size()), opt.jobs, [&](int i) {
    block_b[static_cast<std::size_t>(i)] = run_plan(extra_plans[static_cast<std::size_t>(i)]);
  });
  sort_by_phe(block_b);

  ExperimentReport report;
  report.stage = "stage1";
  report.wall_times = opt.wall_times;
  echo_common_options(report, opt);
  report.config_echo.emplace_back("rl_grid", list_to_string(opt.rl_grid));
  report.config_echo.emplace_back("cm_grid", list_to_string(opt.cm_grid));
  {
    std::string qnhls;
    for (std::size_t i = 0; i < opt.extra_qnhl.size(); ++i) {
      if (i) qnhls += ',';
      qnhls += std::to_string(opt.extra_qnhl[i]);
    }
    report.config_echo.emplace_back("extra_qnhl", qnhls);
  }
  if (!block_a.empty()) {
    report.config_echo.emplace_back("best_by_phe", std::to_string(block_a.front().id));
    report.config_echo.emplace_back("best_by_mse", std::to_string(by_mse.front().id));
  }
  report.records = std::move(block_a);
  report.records.insert(report.records.end(), block_b.begin(), block_b.end());
  return report;
}

// ---------------------------------------------------------------------------
// stage 2

ExperimentReport run_stage2(const RasterImage& source, const StageOptions& opt) {
  if (source.channels != 3)
    throw std::invalid_argument("run_stage2: expected a 3-channel source image");

  const PixelFeatureSet features = extract_features(source, FeatureVariant::rgb3);
  const SampledDataset dataset = sample_training_set(
      source.width, source.height, opt.sample_fraction, derive_seed(opt.seed, 500));
  const Eigen::MatrixXd train_inputs = gather_columns(features.vectors, dataset.training);

  const std::vector<ComboSpec> grid = standard_combo_grid();

  // The 12 distinct smoothing filters are shared across neighbor/erosion
  // variations; smooth once each.
  std::map<std::pair<int, int>, RasterImage> smoothed;
  for (const ComboSpec& combo : grid) {
    const std::pair<int, int> key{combo.filter_kind == MaskKind::weighted, combo.mask_order};
    if (smoothed.count(key)) continue;
    const FilterMask mask = build_mask(combo.filter_kind, combo.mask_order);
    smoothed.emplace(key, apply_linear_filter(source, mask));
  }

  std::vector<SimulationRecord> records(grid.size());
  parallel_for(static_cast<int>(grid.size()), opt.jobs, [&](int i) {
    const ComboSpec& combo = grid[static_cast<std::size_t>(i)];
    const Clock::time_point start = Clock::now();

    DesirableSpec spec = stage_desirable_spec(
        opt, combo.erosion_order > 0 ? DesirableKind::seed : DesirableKind::nseed);
    spec.neighbor = combo.neighbor;
    spec.erosion_order = combo.erosion_order;
    const std::pair<int, int> key{combo.filter_kind == MaskKind::weighted, combo.mask_order};
    const RasterImage desirable = build_desirable(smoothed.at(key), spec);
    const Eigen::ArrayXd desirable_norm = normalize(desirable).values;

    TrainConfig cfg;
    cfg.learning_rate = opt.best_rl;
    cfg.momentum = opt.best_cm;
    cfg.epochs = opt.epochs;
    cfg.seed = derive_seed(opt.seed, 200 + static_cast<std::uint64_t>(i));
    const SegScore score = run_segmentation_sim(
        features, train_inputs, target_row(desirable_norm, dataset.training), desirable,
        desirable_norm, dataset.holdout, opt.best_qnhl, cfg);

    SimulationRecord record;
    record.id = i + 1;
    record.label = format_combo_name(combo);
    record.desirable_kind =
        combo.erosion_order > 0 ? DesirableKind::seed : DesirableKind::nseed;
    record.qnhl = opt.best_qnhl;
    record.rl = opt.best_rl;
    record.cm = opt.best_cm;
    record.epochs = opt.epochs;
    record.phe_percent = score.phe;
    record.mse = score.holdout_mse;
    record.runtime_seconds = seconds_since(start);
    records[static_cast<std::size_t>(i)] = std::move(record);
  });
  sort_by_phe(records);

  ExperimentReport report;
  report.stage = "stage2";
  report.wall_times = opt.wall_times;
  echo_common_options(report, opt);
  report.config_echo.emplace_back("rl", fmt_rate(opt.best_rl));
  report.config_echo.emplace_back("cm", fmt_rate(opt.best_cm));
  report.config_echo.emplace_back("qnhl", std::to_string(opt.best_qnhl));
  report.config_echo.emplace_back("grid_size", std::to_string(grid.size()));
  report.records = std::move(records);
  return report;
}

// ---------------------------------------------------------------------------
// stage 3

ExperimentReport run_stage3(const RasterImage& source, const StageOptions& opt) {
  if (source.channels != 3)
    throw std::invalid_argument("run_stage3: expected a 3-channel source image");

  const SampledDataset dataset = sample_training_set(
      source.width, source.height, opt.sample_fraction, derive_seed(opt.seed, 500));

  const RasterImage desirable =
      build_desirable(source, stage_desirable_spec(opt, DesirableKind::seed));
  const Eigen::ArrayXd desirable_norm = normalize(desirable).values;
  const Eigen::MatrixXd train_targets = target_row(desirable_norm, dataset.training);

  const std::vector<FeatureVariant> variants = {
      FeatureVariant::rgb_hist4, FeatureVariant::isp_gray3, FeatureVariant::hist_gray2,
      FeatureVariant::gray1};

  std::vector<SimulationRecord> all_records;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const FeatureVariant variant = variants[v];
    const PixelFeatureSet features = extract_features(source, variant);
    const Eigen::MatrixXd train_inputs =
        gather_columns(features.vectors, dataset.training);
    const int qnhl = variant == FeatureVariant::rgb_hist4 ? 5 : opt.best_qnhl;

    struct SimPlan {
      int id;
      double rl, cm;
    };
    std::vector<SimPlan> plans;
    int id = static_cast<int>(v) * static_cast<int>(opt.rl_grid.size() * opt.cm_grid.size()) + 1;
    for (const double cm : opt.cm_grid)
      for (const double rl : opt.rl_grid) plans.push_back(SimPlan{id++, rl, cm});

    std::vector<SimulationRecord> block(plans.size());
    parallel_for(static_cast<int>(plans.size()), opt.jobs, [&](int i) {
      const SimPlan& plan = plans[static_cast<std::size_t>(i)];
      const Clock::time_point start = Clock::now();
      TrainConfig cfg;
      cfg.learning_rate = plan.rl;
      cfg.momentum = plan.cm;
      cfg.epochs = opt.epochs;
      cfg.seed = derive_seed(opt.seed, 300 + static_cast<std::uint64_t>(plan.id));
      const SegScore score =
          run_segmentation_sim(features, train_inputs, train_targets, desirable,
                               desirable_norm, dataset.holdout, qnhl, cfg);
      SimulationRecord record;
      record.id = plan.id;
      record.variant = variant;
      record.qnhl = qnhl;
      record.rl = plan.rl;
      record.cm = plan.cm;
      record.epochs = opt.epochs;
      record.desirable_kind = DesirableKind::seed;
      record.phe_percent = score.phe;
      record.mse = score.holdout_mse;
      record.runtime_seconds = seconds_since(start);
      block[static_cast<std::size_t>(i)] = std::move(record);
    });
    sort_by_phe(block);
    all_records.insert(all_records.end(), block.begin(), block.end());
  }

  ExperimentReport report;
  report.stage = "stage3";
  report.wall_times = opt.wall_times;
  echo_common_options(report, opt);
  report.config_echo.emplace_back("rl_grid", list_to_string(opt.rl_grid));
  report.config_echo.emplace_back("cm_grid", list_to_string(opt.cm_grid));
  report.records = std::move(all_records);
  return report;
}

// ---------------------------------------------------------------------------
// stage 4

Stage4Task parse_stage4_task(const std::string& text) {
  if (text == "all") return Stage4Task::all;
  if (text == "filters") return Stage4Task::mean_filters;
  if (text == "afs") return Stage4Task::afs;
  if (text == "awfs") return Stage4Task::awfs;
  throw std::invalid_argument("unknown stage-4 task: " + text +
                              " (expected all, filters, afs or awfs)");
}

std::vector<std::optional<NoiseSpec>> noise_suite(const std::vector<double>& densities,
                                                  std::uint32_t base_seed) {
  std::vector<std::optional<NoiseSpec>> suite;
  suite.push_back(std::nullopt);  // the clean image
  std::uint64_t index = 1;
  for (const double density : densities)
    for (const NoiseChannel mode : {NoiseChannel::red, NoiseChannel::green,
                                    NoiseChannel::blue, NoiseChannel::all}) {
      NoiseSpec spec;
      spec.density = density;
      spec.channel_mode = mode;
      spec.seed = derive_seed(base_seed, 1000 + index);
      suite.push_back(spec);
      ++index;
    }
  return suite;
}

namespace {

struct NoiseContext {
  std::vector<std::optional<NoiseSpec>> specs;
  std::vector<RasterImage> images;          // index-aligned with specs
  std::vector<SampledDataset> samplings;    // per-image training plan
  std::vector<int> density_column;          // 0 for clean, 1.. per density
  int density_count = 0;
};

NoiseContext build_noise_context(const RasterImage& source, const StageOptions& opt) {
  NoiseContext ctx;
  ctx.specs = noise_suite(opt.noise_densities, opt.seed);
  ctx.density_count = static_cast<int>(opt.noise_densities.size());
  ctx.images.reserve(ctx.specs.size());
  ctx.samplings.reserve(ctx.specs.size());
  for (std::size_t i = 0; i < ctx.specs.size(); ++i) {
    ctx.images.push_back(ctx.specs[i] ? inject_salt_pepper(source, *ctx.specs[i])
                                      : source);
    ctx.samplings.push_back(sample_training_set(
        source.width, source.height, opt.sample_fraction,
        derive_seed(opt.seed, 2000 + static_cast<std::uint64_t>(i))));
    ctx.density_column.push_back(
        i == 0 ? 0 : 1 + static_cast<int>((i - 1) / 4));
  }
  return ctx;
}

// Mean per density column (clean stands alone, each density averages its
// four channel modes), plus the grand mean of the columns.
AggregateRow aggregate_from(const std::string& sim, const std::string& table,
                            const std::vector<double>& per_image,
                            const NoiseContext& ctx) {
  AggregateRow agg;
  agg.sim = sim;
  agg.table = table;
  std::array<double, 7> sums{};
  std::array<int, 7> counts{};
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    const int col = ctx.density_column[i];
    sums[static_cast<std::size_t>(col)] += per_image[i];
    counts[static_cast<std::size_t>(col)] += 1;
  }
  const int columns = 1 + ctx.density_count;
  double total = 0.0;
  for (int c = 0; c < columns; ++c) {
    agg.by_density[static_cast<std::size_t>(c)] =
        sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
    total += agg.by_density[static_cast<std::size_t>(c)];
  }
  agg.average = total / columns;
  return agg;
}

std::string noise_tag(const std::optional<NoiseSpec>& spec) {
  if (!spec) return "clean";
  char buf[32];
  std::snprintf(buf, sizeof buf, "d%02d-%s",
                static_cast<int>(spec->density * 100.0 + 0.5),
                to_string(spec->channel_mode));
  return buf;
}

void dump_stage4_image(const StageOptions& opt, const std::string& sim,
                       const char* role, const std::optional<NoiseSpec>& spec,
                       const RasterImage& img) {
  if (opt.image_dump_dir.empty()) return;
  if (spec && spec->channel_mode != NoiseChannel::all) return;  // keep the set small
  std::filesystem::create_directories(opt.image_dump_dir);
  const std::string name = sim + "-" + role + "-" + noise_tag(spec) +
                           (img.channels == 3 ? ".ppm" : ".pgm");
  save_image(img, opt.image_dump_dir / name);
}

struct Stage4Sim {
  SimulationRecord record;
  std::vector<AggregateRow> aggregates;
};

// Concatenated training set over the whole suite: per image, its sampled
// pixels; inputs from `image_features`, targets from `targets_of`.
Eigen::MatrixXd stack_training(const NoiseContext& ctx,
                               const std::function<Eigen::MatrixXd(std::size_t)>& block) {
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(ctx.images.size());
  Eigen::Index rows = 0, cols = 0;
  for (std::size_t i = 0; i < ctx.images.size(); ++i) {
    blocks.push_back(block(i));
    rows = blocks.back().rows();
    cols += blocks.back().cols();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index at = 0;
  for (const Eigen::MatrixXd& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

Stage4Sim run_mean_filter_sim(const RasterImage& source, const NoiseContext& ctx,
                              const StageOptions& opt, const std::string& name,
                              std::uint64_t seed_stream) {
  const Clock::time_point start = Clock::now();
  const ComboSpec combo = parse_combo_name(name);
  const FilterMask mask = build_mask(combo.filter_kind, combo.mask_order);

  DesirableSpec spec = stage_desirable_spec(
      opt, combo.erosion_order > 0 ? DesirableKind::seed : DesirableKind::nseed);
  spec.neighbor = combo.neighbor;
  spec.erosion_order = combo.erosion_order;
  const RasterImage desirable = build_desirable(source, spec, &mask);
  const Eigen::ArrayXd desirable_norm = normalize(desirable).values;

  std::vector<RasterImage> filtered;
  std::vector<PixelFeatureSet> filtered_features;
  filtered.reserve(ctx.images.size());
  for (const RasterImage& img : ctx.images) {
    filtered.push_back(apply_linear_filter(img, mask));
    filtered_features.push_back(
        extract_features(filtered.back(), FeatureVariant::rgb3));
  }

  const Eigen::MatrixXd inputs = stack_training(ctx, [&](std::size_t i) {
    return gather_columns(filtered_features[i].vectors, ctx.samplings[i].training);
  });
  const Eigen::MatrixXd targets = stack_training(ctx, [&](std::size_t i) {
    return target_row(desirable_norm, ctx.samplings[i].training);
  });

  TrainConfig cfg;
  cfg.learning_rate = opt.best_rl;
  cfg.momentum = opt.best_cm;
  cfg.epochs = opt.epochs;
  cfg.seed = derive_seed(opt.seed, seed_stream);
  Network net = init_network(
      std::vector<int>{3, opt.best_qnhl, 1}, cfg.seed);
  train(net, inputs, targets, cfg);

  std::vector<double> filter_phe(ctx.images.size());
  std::vector<double> seg_phe(ctx.images.size());
  double clean_mse = 0.0;
  for (std::size_t i = 0; i < ctx.images.size(); ++i) {
    filter_phe[i] =
        percent_hits(score_hits(filtered[i], source, kFilteringMargin));
    const NormalizedPlane plane = predict_image(net, filtered_features[i]);
    const RasterImage segmented = reconstruct(plane);
    seg_phe[i] =
        percent_hits(score_hits(segmented, desirable, kSegmentationMargin));
    if (i == 0)
      clean_mse = validation_mse(gather_values(plane.values, ctx.samplings[0].holdout),
                                 gather_values(desirable_norm, ctx.samplings[0].holdout));
    dump_stage4_image(opt, name, "seg", ctx.specs[i], segmented);
  }

  Stage4Sim sim;
  sim.aggregates.push_back(aggregate_from(name, "filtering", filter_phe, ctx));
  sim.aggregates.push_back(aggregate_from(name, "segmentation", seg_phe, ctx));
  sim.record.label = name;
  sim.record.desirable_kind =
      combo.erosion_order > 0 ? DesirableKind::seed : DesirableKind::nseed;
  sim.record.qnhl = opt.best_qnhl;
  sim.record.rl = opt.best_rl;
  sim.record.cm = opt.best_cm;
  sim.record.epochs = opt.epochs;
  sim.record.phe_percent = sim.aggregates.back().average;
  sim.record.mse = clean_mse;
  sim.record.runtime_seconds = seconds_since(start);
  return sim;
}

Stage4Sim run_afs_sim(const RasterImage& source, const NoiseContext& ctx,
                      const StageOptions& opt) {
  const Clock::time_point start = Clock::now();
  const RasterImage desirable =
      build_desirable(source, stage_desirable_spec(opt, DesirableKind::seed));
  const Eigen::ArrayXd desirable_norm = normalize(desirable).values;

  std::vector<PixelFeatureSet> noisy_features;
  noisy_features.reserve(ctx.images.size());
  for (const RasterImage& img : ctx.images)
    noisy_features.push_back(extract_features(img, FeatureVariant::rgb3));
  const PixelFeatureSet clean_features =
      extract_features(source, FeatureVariant::rgb3);

  // Filtering network: noisy pixel in, clean pixel out.
  TrainConfig filter_cfg;
  filter_cfg.learning_rate = opt.best_rl;
  filter_cfg.momentum = opt.best_cm;
  filter_cfg.epochs = opt.epochs;
  filter_cfg.seed = derive_seed(opt.seed, 450);
  Network filter_net = init_network(std::vector<int>{3, opt.best_qnhl, 3},
                                    filter_cfg.seed);
  {
    const Eigen::MatrixXd inputs = stack_training(ctx, [&](std::size_t i) {
      return gather_columns(noisy_features[i].vectors, ctx.samplings[i].training);
    });
    const Eigen::MatrixXd targets = stack_training(ctx, [&](std::size_t i) {
      return gather_columns(clean_features.vectors, ctx.samplings[i].training);
    });
    train(filter_net, inputs, targets, filter_cfg);
  }

  std::vector<RasterImage> filtered;
  std::vector<PixelFeatureSet> filtered_features;
  std::vector<double> filter_phe(ctx.images.size());
  filtered.reserve(ctx.images.size());
  for (std::size_t i = 0; i < ctx.images.size(); ++i) {
    filtered.push_back(reconstruct(predict_image(filter_net, noisy_features[i])));
    filtered_features.push_back(
        extract_features(filtered.back(), FeatureVariant::rgb3));
    filter_phe[i] = percent_hits(score_hits(filtered[i], source, kFilteringMargin));
    dump_stage4_image(opt, "AFS", "filtered", ctx.specs[i], filtered[i]);
  }

  // Segmentation network over the filtered suite.
  TrainConfig seg_cfg = filter_cfg;
  seg_cfg.seed = derive_seed(opt.seed, 451);
  Network seg_net = init_network(std::vector<int>{3, opt.best_qnhl, 1}, seg_cfg.seed);
  {
    const Eigen::MatrixXd inputs = stack_training(ctx, [&](std::size_t i) {
      return gather_columns(filtered_features[i].vectors, ctx.samplings[i].training);
    });
    const Eigen::MatrixXd targets = stack_training(ctx, [&](std::size_t i) {
      return target_row(desirable_norm, ctx.samplings[i].training);
    });
    train(seg_net, inputs, targets, seg_cfg);
  }

  std::vector<double> seg_phe(ctx.images.size());
  double clean_mse = 0.0;
  for (std::size_t i = 0; i < ctx.images.size(); ++i) {
    const NormalizedPlane plane = predict_image(seg_net, filtered_features[i]);
    const RasterImage segmented = reconstruct(plane);
    seg_phe[i] = percent_hits(score_hits(segmented, desirable, kSegmentationMargin));
    if (i == 0)
      clean_mse = validation_mse(gather_values(plane.values, ctx.samplings[0].holdout),
                                 gather_values(desirable_norm, ctx.samplings[0].holdout));
    dump_stage4_image(opt, "AFS", "seg", ctx.specs[i], segmented);
  }

  Stage4Sim sim;
  sim.aggregates.push_back(aggregate_from("AFS", "filtering", filter_phe, ctx));
  sim.aggregates.push_back(aggregate_from("AFS", "segmentation", seg_phe, ctx));
  sim.record.label = "AFS";
  sim.record.desirable_kind = DesirableKind::seed;
  sim.record.qnhl = opt.best_qnhl;
  sim.record.rl = opt.best_rl;
  sim.record.cm = opt.best_cm;
  sim.record.epochs = opt.epochs;
  sim.record.phe_percent = sim.aggregates.back().average;
  sim.record.mse = clean_mse;
  sim.record.runtime_seconds = seconds_since(start);
  return sim;
}

Stage4Sim run_awfs_sim(const RasterImage& source, const NoiseContext& ctx,
                       const StageOptions& opt) {
  const Clock::time_point start = Clock::now();
  const RasterImage desirable =
      build_desirable(source, stage_desirable_spec(opt, DesirableKind::seed));
  const Eigen::ArrayXd desirable_norm = normalize(desirable).values;

  std::vector<PixelFeatureSet> noisy_features;
  noisy_features.reserve(ctx.images.size());
  for (const RasterImage& img : ctx.images)
    noisy_features.push_back(extract_features(img, FeatureVariant::rgb3));

  TrainConfig cfg;
  cfg.learning_rate = opt.best_rl;
  cfg.momentum = opt.best_cm;
  cfg.epochs = opt.epochs;
  cfg.seed = derive_seed(opt.seed, 470);
  Network net = init_network(std::vector<int>{3, opt.best_qnhl, 1}, cfg.seed);
  {
    const Eigen::MatrixXd inputs = stack_training(ctx, [&](std::size_t i) {
      return gather_columns(noisy_features[i].vectors, ctx.samplings[i].training);
    });
    const Eigen::MatrixXd targets = stack_training(ctx, [&](std::size_t i) {
      return target_row(desirable_norm, ctx.samplings[i].training);
    });
    train(net, inputs, targets, cfg);
  }

  std::vector<double> seg_phe(ctx.images.size());
  double clean_mse = 0.0;
  for (std::size_t i = 0; i < ctx.images.size(); ++i) {
    const NormalizedPlane plane = predict_image(net, noisy_features[i]);
    const RasterImage segmented = reconstruct(plane);
    seg_phe[i] = percent_hits(score_hits(segmented, desirable, kSegmentationMargin));
    if (i == 0)
      clean_mse = validation_mse(gather_values(plane.values, ctx.samplings[0].holdout),
                                 gather_values(desirable_norm, ctx.samplings[0].holdout));
    dump_stage4_image(opt, "AWFS", "seg", ctx.specs[i], segmented);
  }

  Stage4Sim sim;
  sim.aggregates.push_back(aggregate_from("AWFS", "segmentation", seg_phe, ctx));
  sim.record.label = "AWFS";
  sim.record.desirable_kind = DesirableKind::seed;
  sim.record.qnhl = opt.best_qnhl;
  sim.record.rl = opt.best_rl;
  sim.record.cm = opt.best_cm;
  sim.record.epochs = opt.epochs;
  sim.record.phe_percent = sim.aggregates.back().average;
  sim.record.mse = clean_mse;
  sim.record.runtime_seconds = seconds_since(start);
  return sim;
}

}  // namespace

ExperimentReport run_stage4(const RasterImage& source, Stage4Task task,
                            const StageOptions& opt) {
  if (source.channels != 3)
    throw std::invalid_argument("run_stage4: expected a 3-channel source image");

  const NoiseContext ctx = build_noise_context(source, opt);

  const bool with_filters = task == Stage4Task::mean_filters || task == Stage4Task::all;
  const bool with_afs = task == Stage4Task::afs || task == Stage4Task::all;
  const bool with_awfs = task == Stage4Task::awfs || task == Stage4Task::all;

  std::vector<std::function<Stage4Sim()>> sims;
  if (with_filters)
    for (std::size_t c = 0; c < opt.stage4_combos.size(); ++c)
      sims.push_back([&, c] {
        return run_mean_filter_sim(source, ctx, opt, opt.stage4_combos[c], 400 + c);
      });
  if (with_afs) sims.push_back([&] { return run_afs_sim(source, ctx, opt); });
  if (with_awfs) sims.push_back([&] { return run_awfs_sim(source, ctx, opt); });

  std::vector<Stage4Sim> results(sims.size());
  parallel_for(static_cast<int>(sims.size()), opt.jobs,
               [&](int i) { results[static_cast<std::size_t>(i)] = sims[static_cast<std::size_t>(i)](); });

  ExperimentReport report;
  report.stage = "stage4";
  report.wall_times = opt.wall_times;
  echo_common_options(report, opt);
  report.config_echo.emplace_back("densities", list_to_string(opt.noise_densities));
  report.config_echo.emplace_back("suite_size", std::to_string(ctx.images.size()));
  {
    std::string combos;
    for (std::size_t i = 0; i < opt.stage4_combos.size(); ++i) {
      if (i) combos += ',';
      combos += opt.stage4_combos[i];
    }
    report.config_echo.emplace_back("combos", combos);
  }

  int id = 1;
  for (Stage4Sim& sim : results) {
    sim.record.id = id++;
    report.records.push_back(sim.record);
  }
  // Filtering averages first, then segmentation, mirroring the table pair.
  for (const char* table : {"filtering", "segmentation"})
    for (const Stage4Sim& sim : results)
      for (const AggregateRow& agg : sim.aggregates)
        if (agg.table == table) report.aggregates.push_back(agg);
  return report;
}

// ---------------------------------------------------------------------------
// configuration files

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  for (const std::string& item : split_list(text)) values.push_back(std::stod(item));
  return values;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  for (const std::string& item : split_list(text)) values.push_back(std::stoi(item));
  return values;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

void apply_stage_option(StageOptions& opt, const std::string& key,
                        const std::string& value) {
  if (key == "seed")
    opt.seed = static_cast<std::uint32_t>(std::stoul(value));
  else if (key == "epochs")
    opt.epochs = std::stoi(value);
  else if (key == "rl_grid")
    opt.rl_grid = parse_double_list(value);
  else if (key == "cm_grid")
    opt.cm_grid = parse_double_list(value);
  else if (key == "classes")
    opt.num_classes = std::stoi(value);
  else if (key == "keep_class")
    opt.keep_class = value == "auto" ? -1 : std::stoi(value);
  else if (key == "target_tone")
    opt.target_tone = std::stoi(value);
  else if (key == "neighbor")
    opt.desirable_neighbor = parse_neighbor_mode(value);
  else if (key == "seed_erosion")
    opt.seed_erosion_order = std::stoi(value);
  else if (key == "fraction")
    opt.sample_fraction = std::stod(value);
  else if (key == "qnhl")
    opt.best_qnhl = std::stoi(value);
  else if (key == "rl")
    opt.best_rl = std::stod(value);
  else if (key == "cm")
    opt.best_cm = std::stod(value);
  else if (key == "extra_qnhl")
    opt.extra_qnhl = parse_int_list(value);
  else if (key == "densities")
    opt.noise_densities = parse_double_list(value);
  else if (key == "combos")
    opt.stage4_combos = split_list(value);
  else if (key == "jobs")
    opt.jobs = std::stoi(value);
  else if (key == "wall_times")
    opt.wall_times = value == "1" || value == "true";
  else if (key == "image_dir")
    opt.image_dump_dir = value;
  else
    throw std::invalid_argument("unknown configuration key: " + key);
}

StageOptions load_stage_options(const std::filesystem::path& path,
                                const StageOptions& defaults) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  StageOptions opt = defaults;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected key=value");
    try {
      apply_stage_option(opt, trim(stripped.substr(0, eq)),
                         trim(stripped.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return opt;
}

}  // namespace leafseg
