#include "affssl/exp/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace fs = std::filesystem;

namespace affssl {

namespace {

using nlohmann::json;

std::string hex16(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + path);
    out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot read " + path);
    json j;
    in >> j;
    return j;
}

std::vector<std::string> component_names(const ComponentMask& m) {
    std::vector<std::string> v;
    if (m.use_rotation) v.push_back("rotation");
    if (m.use_translation) v.push_back("translation");
    if (m.use_scale) v.push_back("scale");
    if (m.use_shear) v.push_back("shear");
    return v;
}

}  // namespace

std::string variant_label(const ExperimentConfig& cfg) {
    if (!cfg.affine.enabled) return "baseline";
    std::string s = "affine";
    const ComponentMask all = ComponentMask::all();
    if (cfg.affine.mask.active_dim() != all.active_dim()) {
        s += ":";
        const auto names = component_names(cfg.affine.mask);
        for (size_t i = 0; i < names.size(); ++i) s += (i ? "+" : "") + names[i];
    }
    if (cfg.affine.aggregation == Aggregation::kConcatenation) s += "+concat";
    if (cfg.affine.views == AffineViews::kBoth) s += "+bothviews";
    if (cfg.affine.source == AffineSource::kProjector) s += "+projector";
    if (cfg.affine.bounded) s += "+bounded";
    return s;
}

std::string cell_dir_name(const ExperimentConfig& cfg, uint64_t seed) {
    return "cell_" + hex16(config_hash(cfg)) + "_seed" + std::to_string(seed);
}

std::vector<GridCell> expand_grid(const json& grid) {
    if (!grid.is_object() || !grid.contains("base"))
        throw ConfigError("grid: expected {\"base\": ..., \"axes\": {...}}");
    const json& base = grid.at("base");
    json axes = grid.value("axes", json::object());
    const std::set<std::string> allowed{"method",     "variant", "aggregation", "views",
                                       "source",     "components", "bounded",  "seed"};
    for (const auto& [key, vals] : axes.items()) {
        if (!allowed.count(key)) throw ConfigError("grid: unknown axis \"" + key + "\"");
        if (!vals.is_array() || vals.empty())
            throw ConfigError("grid: axis \"" + key + "\" must be a non-empty array");
    }

    std::vector<std::pair<std::string, json>> axis_list;
    for (const auto& [key, vals] : axes.items()) axis_list.emplace_back(key, vals);
    std::vector<json> combos{json::object()};
    for (const auto& [name, vals] : axis_list) {
        std::vector<json> next;
        for (const json& combo : combos)
            for (const json& v : vals) {
                json c = combo;
                c[name] = v;
                next.push_back(std::move(c));
            }
        combos = std::move(next);
    }

    std::vector<GridCell> cells;
    for (const json& combo : combos) {
        json cell_json = base;
        if (combo.contains("method")) cell_json["method"] = combo.at("method");
        if (combo.contains("seed")) cell_json["seeds"] = json::array({combo.at("seed")});
        json& aff = cell_json["affine"];
        if (!aff.is_object()) aff = json::object();
        if (combo.contains("variant")) {
            const std::string v = combo.at("variant").get<std::string>();
            if (v == "baseline") aff["enabled"] = false;
            else if (v == "affine") aff["enabled"] = true;
            else throw ConfigError("grid: unknown variant \"" + v + "\"");
        }
        if (combo.contains("aggregation")) aff["aggregation"] = combo.at("aggregation");
        if (combo.contains("views")) aff["views"] = combo.at("views");
        if (combo.contains("source")) aff["source"] = combo.at("source");
        if (combo.contains("components")) aff["components"] = combo.at("components");
        if (combo.contains("bounded")) aff["bounded"] = combo.at("bounded");

        ExperimentConfig cfg = parse_experiment_config(cell_json);
        for (uint64_t seed : cfg.seeds) {
            GridCell cell;
            cell.config = cfg;
            cell.config.seeds = {seed};
            cell.seed = seed;
            cell.label = variant_label(cfg);
            cell.dir = (fs::path(cfg.output_dir) / cell_dir_name(cell.config, seed)).string();
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

std::vector<ProbeResult> evaluate_run(const ExperimentConfig& cfg, const std::string& run_dir,
                                      uint64_t seed) {
    std::vector<ProbeResult> results;
    const std::string eval_path = (fs::path(run_dir) / "eval.ndjson").string();
    std::ofstream eval_out(eval_path, std::ios::trunc);
    if (!eval_out) throw IngestionError("cannot write " + eval_path);

    TrainRunConfig run = make_train_run_config(cfg, seed, 0, run_dir);
    for (int64_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
        const bool due = epoch % cfg.eval.cadence == 0 || epoch == cfg.optimizer.epochs;
        const std::string ckpt =
            (fs::path(run_dir) / ("ckpt_epoch_" + std::to_string(epoch) + ".bin")).string();
        if (!due || !fs::exists(ckpt)) continue;
        Networks nets = build_networks(run.networks, seed);
        load_checkpoint(ckpt, nets, nullptr);
        for (const std::string& ds_name : cfg.eval.datasets) {
            ProbeResult r;
            try {
                std::optional<size_t> lim;
                if (cfg.dataset.eval_limit > 0) lim = static_cast<size_t>(cfg.dataset.eval_limit);
                const Dataset probe_train = load_dataset(ds_name, cfg.data_root, Split::kTrain, lim);
                const Dataset probe_eval = load_dataset(ds_name, cfg.data_root, Split::kEval, lim);
                EvalOptions opts;
                opts.trials = cfg.eval.trials;
                opts.train_fraction = cfg.eval.train_fraction;
                opts.probe.l2 = cfg.eval.l2;
                opts.probe.max_iterations = cfg.eval.max_iterations;
                opts.resolution = cfg.dataset.resolution;
                opts.seed = seed;
                r = evaluate_dataset(nets.encoder, probe_train, probe_eval, opts);
            } catch (const IngestionError& e) {
                // missing dataset: warning record, evaluation continues
                eval_out << json{{"schema", 1}, {"epoch", epoch}, {"dataset", ds_name},
                                 {"warning", e.what()}}
                                .dump()
                         << "\n";
                continue;
            }
            r.epoch = epoch;
            eval_out << json{{"schema", 1},
                             {"epoch", epoch},
                             {"dataset", r.dataset},
                             {"mean", r.mean_accuracy},
                             {"ci", r.ci_half_width},
                             {"degenerate_ci", r.degenerate_ci},
                             {"trial_accuracies", r.trial_accuracies},
                             {"trial_seeds", r.trial_seeds}}
                            .dump()
                     << "\n";
            results.push_back(std::move(r));
        }
        eval_out.flush();
    }
    return results;
}

RunOutcome run_cell(const GridCell& cell, bool resume) {
    RunOutcome out;
    out.dir = cell.dir;
    out.label = cell.label;
    out.seed = cell.seed;
    const fs::path done = fs::path(cell.dir) / "DONE";
    if (fs::exists(done)) {
        out.skipped = true;
        return out;
    }
    try {
        fs::create_directories(cell.dir);
        json meta = canonical_json(cell.config);
        meta["seed"] = cell.seed;
        meta["label"] = cell.label;
        meta["config_hash"] = hex16(config_hash(cell.config));
        meta["data_root"] = cell.config.data_root;
        meta["output_dir"] = cell.config.output_dir;
        write_json((fs::path(cell.dir) / "config.json").string(), meta);

        std::optional<size_t> lim;
        if (cell.config.dataset.limit > 0) lim = static_cast<size_t>(cell.config.dataset.limit);
        const Dataset data =
            load_dataset(cell.config.dataset.name, cell.config.data_root, Split::kTrain, lim);

        TrainRunConfig run = make_train_run_config(cell.config, cell.seed, 0, cell.dir);
        fit(run, data, resume);
        evaluate_run(cell.config, cell.dir, cell.seed);

        std::ofstream marker(done);
        marker << "done\n";
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        write_json((fs::path(cell.dir) / "error.json").string(),
                   json{{"error", e.what()}, {"label", cell.label}, {"seed", cell.seed}});
    }
    return out;
}

std::vector<RunOutcome> run_grid(const json& grid) {
    std::vector<RunOutcome> outcomes;
    for (const GridCell& cell : expand_grid(grid)) outcomes.push_back(run_cell(cell));
    return outcomes;
}

std::vector<CellSummary> collect_results(const std::string& output_dir) {
    // group per-seed eval records, then aggregate over seeds
    struct Obs {
        double mean, ci;
    };
    std::map<std::tuple<std::string, std::string, std::string, int64_t>, std::vector<Obs>> groups;
    if (!fs::exists(output_dir)) throw IngestionError("no result store at " + output_dir);
    for (const auto& entry : fs::directory_iterator(output_dir)) {
        const fs::path cfg_path = entry.path() / "config.json";
        const fs::path eval_path = entry.path() / "eval.ndjson";
        if (!fs::exists(cfg_path) || !fs::exists(eval_path)) continue;
        const json meta = read_json(cfg_path.string());
        const std::string method = meta.at("method").get<std::string>();
        const std::string label = meta.at("label").get<std::string>();
        std::ifstream in(eval_path.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json rec = json::parse(line);
            if (rec.contains("warning")) continue;
            groups[{method, label, rec.at("dataset").get<std::string>(),
                    rec.at("epoch").get<int64_t>()}]
                .push_back({rec.at("mean").get<double>(), rec.at("ci").get<double>()});
        }
    }
    std::vector<CellSummary> out;
    for (const auto& [key, obs] : groups) {
        CellSummary s;
        std::tie(s.method, s.label, s.dataset, s.epoch) = key;
        for (const Obs& o : obs) s.seed_means.push_back(o.mean);
        s.mean = std::accumulate(s.seed_means.begin(), s.seed_means.end(), 0.0) /
                 static_cast<double>(s.seed_means.size());
        s.ci = obs.size() >= 2 ? student_t_ci_half_width(s.seed_means) : obs.front().ci;
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::string fmt_pct(double v, int prec = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v * 100.0;
    return os.str();
}

// final-epoch summary per (method, label, dataset)
std::vector<CellSummary> final_epoch_only(const std::vector<CellSummary>& all) {
    std::map<std::tuple<std::string, std::string, std::string>, CellSummary> best;
    for (const CellSummary& s : all) {
        auto key = std::make_tuple(s.method, s.label, s.dataset);
        auto it = best.find(key);
        if (it == best.end() || s.epoch > it->second.epoch) best[key] = s;
    }
    std::vector<CellSummary> out;
    for (auto& [_, s] : best) out.push_back(std::move(s));
    return out;
}

}  // namespace

void render_tables(const std::string& output_dir) {
    const std::vector<CellSummary> finals = final_epoch_only(collect_results(output_dir));
    if (finals.empty()) throw IngestionError("result store is empty: " + output_dir);

    std::set<std::string> dataset_set;
    std::set<std::pair<std::string, std::string>> row_set;
    std::map<std::tuple<std::string, std::string, std::string>, const CellSummary*> cells;
    for (const CellSummary& s : finals) {
        dataset_set.insert(s.dataset);
        row_set.insert({s.method, s.label});
        cells[{s.method, s.label, s.dataset}] = &s;
    }
    const std::vector<std::string> datasets(dataset_set.begin(), dataset_set.end());

    // column maxima for bold marking
    std::map<std::string, double> col_max;
    for (const CellSummary& s : finals) {
        auto it = col_max.find(s.dataset);
        if (it == col_max.end() || s.mean > it->second) col_max[s.dataset] = s.mean;
    }

    std::ostringstream md;
    md << "# Linear-probe accuracy (final epoch, % with 95% CI)\n\n";
    md << "| method | variant |";
    for (const auto& d : datasets) md << " " << d << " |";
    md << "\n|---|---|";
    for (size_t i = 0; i < datasets.size(); ++i) md << "---|";
    md << "\n";
    json export_rows = json::array();
    for (const auto& [method, label] : row_set) {
        md << "| " << method << " | " << label << " |";
        for (const auto& d : datasets) {
            auto it = cells.find({method, label, d});
            if (it == cells.end()) {
                md << " — |";
                continue;
            }
            const CellSummary& s = *it->second;
            std::string text = fmt_pct(s.mean) + " ± " + fmt_pct(s.ci);
            if (s.mean == col_max.at(d)) text = "**" + text + "**";
            md << " " << text << " |";
            export_rows.push_back({{"method", s.method},
                                   {"variant", s.label},
                                   {"dataset", s.dataset},
                                   {"epoch", s.epoch},
                                   {"mean", s.mean},
                                   {"ci", s.ci},
                                   {"seed_means", s.seed_means}});
        }
        md << "\n";
    }

    // percent-of-max: variant accuracy / full-model accuracy, averaged over
    // the datasets present for the variant
    json pct = json::array();
    md << "\n# Percentage of maximum accuracy\n\n| method | variant | % of max |\n|---|---|---|\n";
    for (const auto& [method, label] : row_set) {
        double sum = 0.0;
        int count = 0;
        for (const auto& d : datasets) {
            auto it = cells.find({method, label, d});
            if (it == cells.end()) continue;
            double ref = -1.0;
            auto full = cells.find({method, "affine", d});
            if (full != cells.end()) ref = full->second->mean;
            else {
                for (const auto& [k, c] : cells)
                    if (std::get<0>(k) == method && std::get<2>(k) == d)
                        ref = std::max(ref, c->mean);
            }
            if (ref <= 0.0) continue;
            sum += it->second->mean / ref;
            ++count;
        }
        if (count == 0) continue;
        const double value = sum / count;
        md << "| " << method << " | " << label << " | " << fmt_pct(value) << " |\n";
        pct.push_back({{"method", method}, {"variant", label}, {"percent_of_max", value * 100.0}});
    }

    const fs::path report = fs::path(output_dir) / "report";
    fs::create_directories(report);
    std::ofstream md_out((report / "tables.md").string(), std::ios::trunc);
    md_out << md.str();
    write_json((report / "tables.json").string(),
               json{{"rows", export_rows}, {"percent_of_max", pct}});
}

namespace {

struct Series {
    std::string label;
    std::vector<int64_t> epochs;
    std::vector<double> means, cis;
};

std::string svg_color(size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % 8];
}

std::string render_svg(const std::string& title, const std::vector<Series>& series) {
    const double width = 640, height = 420;
    const double ml = 60, mr = 20, mt = 40, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;

    int64_t x_max = 1;
    double y_lo = 1.0, y_hi = 0.0;
    for (const Series& s : series)
        for (size_t i = 0; i < s.epochs.size(); ++i) {
            x_max = std::max(x_max, s.epochs[i]);
            y_lo = std::min(y_lo, s.means[i] - s.cis[i]);
            y_hi = std::max(y_hi, s.means[i] + s.cis[i]);
        }
    if (y_hi <= y_lo) {
        y_lo -= 0.05;
        y_hi += 0.05;
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo = std::max(0.0, y_lo - pad);
    y_hi = std::min(1.0, y_hi + pad);

    auto px = [&](double e) { return ml + pw * e / static_cast<double>(x_max); };
    auto py = [&](double v) { return mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo)); };

    std::ostringstream svg;
    svg.setf(std::ios::fixed);
    svg.precision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << title << "</text>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";

    std::set<int64_t> ticks;
    for (const Series& s : series) ticks.insert(s.epochs.begin(), s.epochs.end());
    for (int64_t e : ticks) {
        svg << "<line x1=\"" << px(e) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(e) << "\" y2=\""
            << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << px(e) << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-size=\"11\">" << e << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = y_lo + (y_hi - y_lo) * i / 4.0;
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(v) << "\" x2=\"" << ml << "\" y2=\""
            << py(v) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 10 << "\" y=\"" << py(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt_pct(v, 0) << "%</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">epoch</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const std::string color = svg_color(si);
        if (s.epochs.size() == 1) {
            svg << "<circle cx=\"" << px(static_cast<double>(s.epochs[0])) << "\" cy=\""
                << py(s.means[0]) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
        } else {
            std::ostringstream band, line;
            for (size_t i = 0; i < s.epochs.size(); ++i)
                band << px(static_cast<double>(s.epochs[i])) << "," << py(s.means[i] + s.cis[i])
                     << " ";
            for (size_t i = s.epochs.size(); i-- > 0;)
                band << px(static_cast<double>(s.epochs[i])) << "," << py(s.means[i] - s.cis[i])
                     << " ";
            for (size_t i = 0; i < s.epochs.size(); ++i)
                line << px(static_cast<double>(s.epochs[i])) << "," << py(s.means[i]) << " ";
            svg << "<polygon points=\"" << band.str() << "\" fill=\"" << color
                << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
            svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"2\"/>\n";
        }
        svg << "<rect x=\"" << ml + 10 << "\" y=\"" << mt + 10 + 18 * static_cast<double>(si)
            << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << ml + 28 << "\" y=\"" << mt + 20 + 18 * static_cast<double>(si)
            << "\" font-size=\"12\">" << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

void render_curves(const std::string& output_dir) {
    const std::vector<CellSummary> all = collect_results(output_dir);
    if (all.empty()) throw IngestionError("result store is empty: " + output_dir);

    std::map<std::pair<std::string, std::string>, std::map<std::string, Series>> figures;
    for (const CellSummary& s : all) {
        Series& series = figures[{s.method, s.dataset}][s.label];
        series.label = s.label;
        series.epochs.push_back(s.epoch);
        series.means.push_back(s.mean);
        series.cis.push_back(s.ci);
    }

    const fs::path report = fs::path(output_dir) / "report";
    fs::create_directories(report);
    json export_series = json::array();
    for (auto& [key, by_label] : figures) {
        const auto& [method, dataset] = key;
        std::vector<Series> series_list;
        for (auto& [label, s] : by_label) {
            // epochs arrive sorted from collect_results' ordered grouping
            series_list.push_back(s);
            export_series.push_back({{"method", method},
                                     {"dataset", dataset},
                                     {"variant", label},
                                     {"epochs", s.epochs},
                                     {"means", s.means},
                                     {"cis", s.cis}});
        }
        const std::string name = "curve_" + method + "_" + dataset + ".svg";
        std::ofstream out((report / name).string(), std::ios::trunc);
        out << render_svg(method + " on " + dataset, series_list);
    }
    write_json((report / "series.json").string(), export_series);
}

}  // namespace affssl
