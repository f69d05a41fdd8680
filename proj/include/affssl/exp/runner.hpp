#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affssl/exp/config.hpp"

namespace affssl {

// One fully-specified training run: a point of the grid at a single seed.
struct GridCell {
    ExperimentConfig config;  // seeds collapsed to exactly one entry
    uint64_t seed = 0;
    std::string label;  // "baseline" or "affine" plus non-default markers
    std::string dir;    // cell directory under output_dir
};

std::string variant_label(const ExperimentConfig& cfg);
std::string cell_dir_name(const ExperimentConfig& cfg, uint64_t seed);

// Grid spec: {"base": <experiment config>, "axes": {...}}. Axis keys:
// method, variant (baseline|affine), aggregation, views, source,
// components (list of component lists), bounded, seed. Cells are the
// cartesian product of the axes applied over the base config.
std::vector<GridCell> expand_grid(const nlohmann::json& grid);

struct RunOutcome {
    std::string dir;
    std::string label;
    uint64_t seed = 0;
    bool skipped = false;  // done marker already present
    bool failed = false;
    std::string error;
};

// Train one cell and probe its periodic checkpoints; writes config.json,
// metrics.ndjson, eval.ndjson and a done marker into the cell directory.
RunOutcome run_cell(const GridCell& cell, bool resume = false);

// Sequential grid execution; finished cells are skipped, failures recorded
// and the grid continues.
std::vector<RunOutcome> run_grid(const nlohmann::json& grid);

// Probe the checkpoints in run_dir at the experiment's eval cadence and
// append records to eval.ndjson. Returns records for the evaluated epochs.
std::vector<ProbeResult> evaluate_run(const ExperimentConfig& cfg, const std::string& run_dir,
                                      uint64_t seed);

// One ProbeResult aggregated over the seeds of a (label, method, dataset,
// epoch) group; CI over per-seed means when >= 2 seeds.
struct CellSummary {
    std::string method, label, dataset;
    int64_t epoch = 0;
    double mean = 0.0;
    double ci = 0.0;
    std::vector<double> seed_means;
};

// Reads every cell's eval.ndjson under output_dir.
std::vector<CellSummary> collect_results(const std::string& output_dir);

// tables.md + tables.json under <output_dir>/report: final-epoch accuracy
// per (method, variant) x dataset with bold column maxima, plus the
// percent-of-max summary (variant / column max, averaged over datasets).
void render_tables(const std::string& output_dir);

// One SVG per (method, dataset) with a CI band per variant, plus
// series.json holding the exact plotted values.
void render_curves(const std::string& output_dir);

}  // namespace affssl
