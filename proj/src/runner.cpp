#include "laser/runner.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include "laser/data.hpp"
#include "laser/errors.hpp"
#include "laser/inference.hpp"
#include "laser/missingness.hpp"
#include "laser/rng.hpp"
#include "laser/training.hpp"

namespace laser {

namespace {

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct GridCell {
    bool beta = false;
    double p_train = 0.0, p_test = 0.0;
    std::string train_label, test_label;
};

struct RunUnit {
    std::size_t index = 0;
    Method method{};
    std::string method_label;
    GridCell cell;
    std::uint64_t seed = 0;
};

ObservationMask draw_mask(const RunConfig& cfg, const GridCell& cell, bool train, int rows, std::uint64_t seed) {
    const std::string tag = std::string(train ? "mask-train/" : "mask-test/") +
                            (train ? cell.train_label : cell.test_label);
    if (cell.beta) {
        const BlockProbs probs = sample_block_probs_beta(
            cfg.num_clients, cfg.beta_alpha, cfg.beta_beta,
            seed_for(seed, train ? "beta-train" : "beta-test"));
        return sample_mask_per_block(rows, probs, seed_for(seed, tag));
    }
    return sample_mask_uniform(rows, cfg.num_clients, train ? cell.p_train : cell.p_test, seed_for(seed, tag));
}

std::string trace_filename(const RunUnit& unit) {
    return "trace_" + unit.method_label + "_s" + std::to_string(unit.seed) + "_tr" + unit.cell.train_label +
           "_te" + unit.cell.test_label + ".csv";
}

}  // namespace

int thread_cap_from_env() {
    const char* env = std::getenv("LASER_VFL_THREADS");
    if (!env || *env == '\0') return 1;
    int v = 0;
    auto res = std::from_chars(env, env + std::string(env).size(), v);
    if (res.ec != std::errc() || v < 0) return 1;
    return v == 0 ? 1 : v;
}

RunOutcome run_experiment(const RunConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    RunOutcome outcome;

    // one dataset per seed, shared by every method and grid cell; train and
    // test rows come from the same generation so their distributions match
    const bool synthetic = cfg.source == "synthetic";
    PartitionedDataset csv_ds;
    if (!synthetic) csv_ds = load_csv(cfg.features_csv, cfg.block_schema);

    std::vector<GridCell> cells;
    if (cfg.has_beta) {
        GridCell c;
        c.beta = true;
        c.train_label = "beta";
        c.test_label = "beta";
        cells.push_back(c);
    } else {
        for (double pt : cfg.p_miss_train)
            for (double pe : cfg.p_miss_test) {
                GridCell c;
                c.p_train = pt;
                c.p_test = pe;
                c.train_label = fmt(pt);
                c.test_label = fmt(pe);
                cells.push_back(c);
            }
    }

    std::vector<RunUnit> units;
    for (const std::string& m : cfg.methods)
        for (const GridCell& cell : cells)
            for (std::uint64_t seed : cfg.seeds) {
                RunUnit u;
                u.index = units.size();
                u.method = parse_method(m);
                u.method_label = m;
                u.cell = cell;
                u.seed = seed;
                units.push_back(u);
            }

    const fs::path run_dir = fs::path(cfg.out_dir) / ("run_" + config_hash(cfg));
    fs::create_directories(run_dir);
    outcome.run_dir = run_dir.string();

    {
        std::ofstream cfg_out(run_dir / "config_resolved.txt");
        cfg_out << canonical_config(cfg);
    }

    ModelDims dims;
    dims.d_rep = cfg.d_rep;
    dims.hidden = cfg.hidden;

    std::vector<ResultRow> rows(units.size());

    auto execute = [&](const RunUnit& unit) {
        ResultRow row;
        row.method = unit.method_label;
        row.p_train_label = unit.cell.train_label;
        row.p_test_label = unit.cell.test_label;
        row.seed = unit.seed;
        try {
            PartitionedDataset train_ds, test_ds;
            if (synthetic) {
                const PartitionedDataset all =
                    synth_classification(cfg.n_samples + cfg.n_test, cfg.num_clients, cfg.block_widths,
                                         cfg.num_classes, cfg.informative_overlap, cfg.noise,
                                         seed_for(unit.seed, "data"));
                train_ds = head_rows(all, cfg.n_samples);
                test_ds = tail_rows(all, cfg.n_samples);
            } else {
                train_ds = csv_ds;
                test_ds = csv_ds;
            }

            const ObservationMask train_mask = draw_mask(cfg, unit.cell, true, train_ds.num_samples, unit.seed);
            const ObservationMask test_mask = draw_mask(cfg, unit.cell, false, test_ds.num_samples, unit.seed);

            TrainConfig tc;
            tc.lr = cfg.lr;
            tc.epochs = cfg.epochs;
            tc.batch_size = cfg.batch_size;
            tc.seed = unit.seed;
            tc.record_exact_loss = cfg.record_exact_loss;
            tc.plugvfl_dropout = cfg.plugvfl_dropout;
            tc.schedule = cfg.lr_schedule == "tuned_sqrt" ? TrainConfig::LrSchedule::TunedSqrt
                                                          : TrainConfig::LrSchedule::Constant;
            tc.collect_messages = cfg.export_messages;

            const TrainTrace trace = train(unit.method, train_ds, train_mask, dims, tc);
            save_trace_csv(trace.steps, (run_dir / trace_filename(unit)).string());
            if (cfg.export_messages && unit.method == Method::Laser)
                save_message_log_csv(trace.message_log,
                                     (run_dir / ("messages_" + trace_filename(unit))).string());

            const auto records = evaluate(unit.method, trace.final_params, test_ds, test_mask,
                                          seed_for(unit.seed, "eval/" + unit.cell.test_label));
            const MetricReport rep = compute_metrics(records, cfg.num_clients, test_ds.num_classes);
            row.accuracy = rep.accuracy;
            row.has_f1 = rep.has_f1;
            row.f1 = rep.f1;
            row.fallbacks = rep.fallback_count;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows[unit.index] = std::move(row);
    };

    const int cap = thread_cap_from_env();
    if (cap <= 1 || units.size() <= 1) {
        for (const RunUnit& u : units) execute(u);
    } else {
        std::atomic<std::size_t> next{0};
        const int workers = std::min<std::size_t>(static_cast<std::size_t>(cap), units.size());
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= units.size()) return;
                    execute(units[i]);
                }
            });
        for (std::thread& t : pool) t.join();
    }

    // per-run rows, fixed order
    {
        std::ofstream out(run_dir / "results.csv");
        out << "method,p_miss_train,p_miss_test,seed,accuracy,f1,n_fallbacks\n";
        for (const ResultRow& r : rows) {
            if (r.failed) continue;
            out << r.method << ',' << r.p_train_label << ',' << r.p_test_label << ',' << r.seed << ','
                << fmt(r.accuracy) << ',' << (r.has_f1 ? fmt(r.f1) : "") << ',' << r.fallbacks << "\n";
        }
    }

    // aggregate mean and sample standard deviation per grid cell
    {
        std::ofstream out(run_dir / "aggregate.csv");
        out << "method,p_miss_train,p_miss_test,n_runs,accuracy_mean,accuracy_std,f1_mean,f1_std,fallbacks_mean\n";
        for (const std::string& m : cfg.methods)
            for (const GridCell& cell : cells) {
                std::vector<const ResultRow*> group;
                for (const ResultRow& r : rows)
                    if (!r.failed && r.method == m && r.p_train_label == cell.train_label &&
                        r.p_test_label == cell.test_label)
                        group.push_back(&r);
                if (group.empty()) continue;
                const double n = static_cast<double>(group.size());
                double acc_mean = 0.0, f1_mean = 0.0, fb_mean = 0.0;
                bool any_f1 = group.front()->has_f1;
                for (const ResultRow* r : group) {
                    acc_mean += r->accuracy;
                    f1_mean += r->f1;
                    fb_mean += static_cast<double>(r->fallbacks);
                }
                acc_mean /= n;
                f1_mean /= n;
                fb_mean /= n;
                double acc_var = 0.0, f1_var = 0.0;
                for (const ResultRow* r : group) {
                    acc_var += (r->accuracy - acc_mean) * (r->accuracy - acc_mean);
                    f1_var += (r->f1 - f1_mean) * (r->f1 - f1_mean);
                }
                const double acc_std = group.size() > 1 ? std::sqrt(acc_var / (n - 1.0)) : 0.0;
                const double f1_std = group.size() > 1 ? std::sqrt(f1_var / (n - 1.0)) : 0.0;
                out << m << ',' << cell.train_label << ',' << cell.test_label << ',' << group.size() << ','
                    << fmt(acc_mean) << ',' << fmt(acc_std) << ',' << (any_f1 ? fmt(f1_mean) : "") << ','
                    << (any_f1 ? fmt(f1_std) : "") << ',' << fmt(fb_mean) << "\n";
            }
    }

    std::size_t failures = 0;
    for (const ResultRow& r : rows)
        if (r.failed) {
            ++failures;
            log << "run failed: method=" << r.method << " p_train=" << r.p_train_label
                << " p_test=" << r.p_test_label << " seed=" << r.seed << ": " << r.error << "\n";
        }
    outcome.rows = std::move(rows);
    outcome.exit_code = failures == 0 ? 0 : 2;
    log << "wrote " << outcome.run_dir << "\n";
    return outcome;
}

}  // namespace laser
