#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leafseg/features.hpp"
#include "leafseg/filtering.hpp"
#include "leafseg/image.hpp"
#include "leafseg/segmentation.hpp"

namespace leafseg {

// One cell of the combination grid: smoothing filter, neighbor cleanup and
// erosion choices, named by the compact grammar
//   ("M" | "MW") order ("WN" | "N4" | "N8") ("WE" | "E" order)
// e.g. "M3N8E5" or "MW3N8E5"; "M5WNE11" skips the neighbor step.
struct ComboSpec {
  MaskKind filter_kind = MaskKind::simple;
  int mask_order = 3;
  NeighborMode neighbor = NeighborMode::none;
  int erosion_order = 0;  // 0 = no erosion

  bool operator==(const ComboSpec&) const = default;
};

ComboSpec parse_combo_name(std::string_view name);
std::string format_combo_name(const ComboSpec& spec);

// The full grid: simple masks {3,5,7,9,11,15,35} plus weighted {3,5,7,9,11},
// times neighbors {WN,N4,N8}, times erosions {0,3,5,11} -- 144 combinations.
std::vector<ComboSpec> standard_combo_grid();

// Sampling plan: round(fraction * pixels) distinct training pixels drawn
// without replacement; everything else is the validation holdout.
struct SampledDataset {
  std::vector<std::int32_t> training;
  std::vector<std::int32_t> holdout;
  std::uint32_t seed = 0;
};

// 1400 training pixels out of a 320x240 image.
inline constexpr double kDefaultSampleFraction = 1400.0 / 76800.0;

SampledDataset sample_training_set(int width, int height, double fraction,
                                   std::uint32_t seed);

enum class DesirableKind { seed, nseed };
const char* to_string(DesirableKind kind);

struct SimulationRecord {
  int id = 0;
  std::string label;  // combination or pipeline name where applicable
  DesirableKind desirable_kind = DesirableKind::seed;
  int qnhl = 4;
  double rl = 0.01;
  double cm = 0.9;
  int epochs = 100;
  FeatureVariant variant = FeatureVariant::rgb3;
  std::optional<NoiseSpec> noise;
  double phe_percent = 0.0;
  double mse = 0.0;
  double runtime_seconds = 0.0;
};

// Tables-style average row: one value per noise level (clean, 5%..30%) plus
// the mean of those seven columns.
struct AggregateRow {
  std::string sim;
  std::string table;  // "filtering" or "segmentation"
  std::array<double, 7> by_density{};
  double average = 0.0;
};

struct ExperimentReport {
  std::string stage;
  std::vector<std::pair<std::string, std::string>> config_echo;  // '# key=value'
  std::vector<SimulationRecord> records;
  std::vector<AggregateRow> aggregates;
  // When false the runtime column is written as 0.00 so identical runs
  // produce byte-identical files.
  bool wall_times = false;
};

// Deterministic CSV: '#' comment lines echoing the configuration, one header
// row (stage-specific, documented in the README), then the records and any
// aggregate rows. Identical reports render to identical bytes.
std::string render_report(const ExperimentReport& report);
// Returns the number of bytes written.
std::size_t write_report(const ExperimentReport& report,
                         const std::filesystem::path& path);

struct StageOptions {
  std::uint32_t seed = 42;
  int epochs = 100;
  std::vector<double> rl_grid = {0.01, 0.1, 0.3, 0.5};
  std::vector<double> cm_grid = {0.3, 0.5, 0.7, 0.9};

  // Target-image construction. The bundled fixture is two-tone, so the
  // stage workflows default to a two-class split; the brightest class is
  // kept (tone 255) unless keep_class pins one explicitly.
  int num_classes = 2;
  int keep_class = -1;
  int target_tone = 255;
  NeighborMode desirable_neighbor = NeighborMode::none;
  int seed_erosion_order = 3;  // erosion used by "Seed" targets

  double sample_fraction = kDefaultSampleFraction;

  // Reference configuration reused by stages 2-4 (strongest first-stage
  // setting: learning rate 0.01, momentum 0.9, 4 hidden neurons).
  int best_qnhl = 4;
  double best_rl = 0.01;
  double best_cm = 0.9;

  std::vector<int> extra_qnhl = {5, 8};  // second first-stage task

  std::vector<double> noise_densities = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
  std::vector<std::string> stage4_combos = {"M3N8E5", "M5WNE11", "M7N4E11",
                                            "M9N8E11", "MW3N8E5"};

  int jobs = 0;  // worker cap for independent simulations; 0 = hardware
  bool wall_times = false;
  std::filesystem::path image_dump_dir;  // stage 4: write output images here
};

// The "Seed"/"NSeed" targets the stage workflows train against.
DesirableSpec stage_desirable_spec(const StageOptions& opt, DesirableKind kind);

// Grid sweep over (learning rate, momentum) x (Seed, NSeed) -- 32 runs --
// followed by the six best rerun with the extra hidden-layer sizes (12
// more). Records are sorted by descending hit percentage inside each block.
ExperimentReport run_stage1(const RasterImage& source, const StageOptions& opt = {});

// All 144 grid combinations applied to the target-image preparation, each
// trained with the reference configuration and ranked by hit percentage.
ExperimentReport run_stage2(const RasterImage& source, const StageOptions& opt = {});

// Input-variant sweep: 16 (rate, momentum) runs for each of the four
// alternative feature layouts (64 records).
ExperimentReport run_stage3(const RasterImage& source, const StageOptions& opt = {});

enum class Stage4Task { mean_filters, afs, awfs, all };
Stage4Task parse_stage4_task(const std::string& text);

// Noise-robustness comparison over 1 clean + 24 noisy images (six densities
// by four channel modes): classical smoothing combos before a segmentation
// network, the two-network filter+segment pipeline (AFS), and the single
// noise-trained segmentation network (AWFS). Aggregate rows mirror the
// per-density averages of the reference tables.
ExperimentReport run_stage4(const RasterImage& source, Stage4Task task,
                            const StageOptions& opt = {});

// The ordered noise suite: index 0 is the clean image (no spec), then one
// entry per (density, channel mode) pair, channel modes cycling fastest.
std::vector<std::optional<NoiseSpec>> noise_suite(const std::vector<double>& densities,
                                                  std::uint32_t base_seed);

// Flat key=value configuration file (one pair per line, '#' comments).
// Recognized keys match the stage options; unknown keys throw.
StageOptions load_stage_options(const std::filesystem::path& path,
                                const StageOptions& defaults = {});
void apply_stage_option(StageOptions& opt, const std::string& key,
                        const std::string& value);

}  // namespace leafseg
