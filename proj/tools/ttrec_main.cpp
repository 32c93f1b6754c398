// Command-line front end: preprocessing, synthetic data, teacher training,
// distillation, evaluation, compression reports and the latency benchmark.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ttrec/checkpoint.hpp"
#include "ttrec/config.hpp"
#include "ttrec/data.hpp"
#include "ttrec/metrics.hpp"
#include "ttrec/reference_configs.hpp"
#include "ttrec/trainer.hpp"

namespace fs = std::filesystem;
using namespace ttrec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
    std::string preset = "synthetic";
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_out = true) {
    cmd->add_option("--preset", o.preset, "configuration preset: tmall, retailrocket, synthetic");
    cmd->add_option("--config", o.config_path, "configuration file overriding the preset");
    cmd->add_option("--seed", o.seed, "seed override");
    if (needs_out) {
        cmd->add_option("--out", o.out_dir, "output directory")->required();
        cmd->add_flag("--force", o.force, "allow writing into a non-empty output directory");
    }
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg = preset(o.preset);
    if (!o.config_path.empty()) apply_config_file(cfg, o.config_path);
    apply_env_overrides(cfg);
    if (o.seed >= 0) {
        cfg.train.seed = static_cast<std::uint64_t>(o.seed);
        cfg.synth.seed = static_cast<std::uint64_t>(o.seed);
    }
    cfg.validate();
    return cfg;
}

fs::path prepare_out_dir(const CommonOpts& o) {
    const fs::path dir(o.out_dir);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw IoError("'" + o.out_dir + "' exists and is not a directory");
        if (!fs::is_empty(dir) && !o.force)
            throw ConfigError("output directory '" + o.out_dir +
                              "' is not empty; pass --force to reuse it");
    } else {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory '" + o.out_dir + "': " + ec.message());
    }
    return dir;
}

void print_stats(const DatasetBundle& b) {
    const auto s = b.stats();
    std::cout << "dataset statistics\n"
              << "  sessions (train/val):  " << b.train_sessions.size() << " / "
              << b.val_sessions.size() << "\n"
              << "  training instances:    " << s.train_instances << "\n"
              << "  validation instances:  " << b.val_instances.size() << "\n"
              << "  test instances:        " << s.test_instances << "\n"
              << "  items:                 " << s.num_items << "\n"
              << "  avg session length:    " << s.avg_session_length << "\n";
}

SeqModel<float> model_from_checkpoint(const std::string& path) {
    auto data = load_checkpoint(path);
    ModelConfig cfg = model_config_from_text(data.config_text);
    return SeqModel<float>::from_parts(cfg, store_from_checkpoint(data));
}

void save_model(const SeqModel<float>& model, const fs::path& path) {
    save_checkpoint(path.string(), model_config_to_text(model.cfg), model.store);
}

void print_metrics(const MetricTable& m) {
    std::printf("metric     value\n");
    std::printf("P@5      %7.2f\n", m.p5);
    std::printf("MRR@5    %7.2f\n", m.mrr5);
    std::printf("P@10     %7.2f\n", m.p10);
    std::printf("MRR@10   %7.2f\n", m.mrr10);
    std::printf("instances %ld\n", static_cast<long>(m.instances));
}

int cmd_preprocess(const CommonOpts& o, const std::string& input, char delimiter) {
    RunConfig cfg = resolve_config(o);
    const fs::path dir = prepare_out_dir(o);
    auto raw = ingest(input, delimiter);
    auto bundle = split_and_augment(preprocess(raw), 0.1, cfg.train.seed);
    save_bundle(bundle, (dir / "bundle.bin").string());
    print_stats(bundle);
    std::cout << "bundle written to " << (dir / "bundle.bin").string() << "\n";
    return kExitOk;
}

int cmd_synth(const CommonOpts& o) {
    RunConfig cfg = resolve_config(o);
    const fs::path dir = prepare_out_dir(o);
    auto bundle = synth_generate(cfg.synth);
    save_bundle(bundle, (dir / "bundle.bin").string());
    print_stats(bundle);
    std::cout << "bundle written to " << (dir / "bundle.bin").string() << "\n";
    return kExitOk;
}

int cmd_train_teacher(const CommonOpts& o, const std::string& bundle_path) {
    RunConfig cfg = resolve_config(o);
    const fs::path dir = prepare_out_dir(o);
    auto bundle = load_bundle(bundle_path);
    auto model = SeqModel<float>::create(cfg.teacher_model(bundle.num_items()), cfg.train.seed);

    std::ofstream log((dir / "train_log.tsv").string(), std::ios::app);
    if (!log) throw IoError("cannot write training log in '" + o.out_dir + "'");
    const auto run = train_teacher(model, bundle, cfg.train, &log);

    const fs::path ckpt = dir / "teacher.ckpt";
    save_model(model, ckpt);
    if (run.diverged) {
        std::cerr << "training diverged; last good checkpoint written to " << ckpt.string() << "\n";
        return kExitNumeric;
    }
    std::cout << "teacher checkpoint written to " << ckpt.string() << "\n";
    if (run.best_epoch > 0)
        std::cout << "best validation P@5 " << run.best_val_p5 << " at epoch " << run.best_epoch << "\n";
    return kExitOk;
}

int cmd_distill(const CommonOpts& o, const std::string& bundle_path, const std::string& teacher_path,
                bool no_cl, bool no_pred, bool no_soft, bool no_kd) {
    RunConfig cfg = resolve_config(o);
    if (no_cl || no_kd) cfg.kd.beta1 = 0;
    if (no_pred || no_kd) cfg.kd.beta2 = 0;
    if (no_soft || no_kd) cfg.kd.beta3 = 0;
    cfg.kd.batch_size = cfg.train.batch_size;
    cfg.kd.epochs = cfg.train.epochs;
    cfg.kd.learning_rate = cfg.train.lr;

    const fs::path dir = prepare_out_dir(o);
    auto bundle = load_bundle(bundle_path);
    auto teacher = model_from_checkpoint(teacher_path);
    if (teacher.cfg.num_items != bundle.num_items())
        throw ConfigError("teacher checkpoint catalog (" + std::to_string(teacher.cfg.num_items) +
                          " items) does not match bundle (" + std::to_string(bundle.num_items()) + ")");

    ModelConfig scfg = cfg.student_model(bundle.num_items());
    scfg.max_seq_len = teacher.cfg.max_seq_len;
    if (scfg.embed_dim != teacher.cfg.embed_dim)
        throw ConfigError("student embed_dim " + std::to_string(scfg.embed_dim) +
                          " does not match teacher embed_dim " + std::to_string(teacher.cfg.embed_dim));
    auto student = SeqModel<float>::create(scfg, cfg.train.seed + 1);

    const std::uint64_t teacher_sum = teacher.store.checksum();
    std::ofstream log((dir / "distill_log.tsv").string(), std::ios::app);
    if (!log) throw IoError("cannot write distillation log in '" + o.out_dir + "'");
    const auto run = distill(student, teacher, bundle, cfg.kd, cfg.train, KdTasks{}, &log);
    if (teacher.store.checksum() != teacher_sum)
        throw NumericalError("teacher parameters changed during distillation");

    const fs::path ckpt = dir / "student.ckpt";
    save_model(student, ckpt);
    if (run.diverged) {
        std::cerr << "distillation diverged; last good checkpoint written to " << ckpt.string() << "\n";
        return kExitNumeric;
    }
    std::cout << "student checkpoint written to " << ckpt.string() << "\n";
    if (student.provider.mode() != EmbeddingMode::kDense) {
        const auto rep = compression_report(student.provider.shape(), student.provider.mode());
        std::cout << "embedding compression rate: " << rep.rate << "x (" << rep.params_compressed
                  << " core parameters)\n";
    }
    return kExitOk;
}

int cmd_evaluate(const CommonOpts& o, const std::string& ckpt_path, const std::string& bundle_path,
                 bool long_tail, const std::string& train_log, const std::string& plot_data) {
    auto bundle = load_bundle(bundle_path);
    auto model = model_from_checkpoint(ckpt_path);
    if (model.cfg.num_items != bundle.num_items())
        throw ConfigError("checkpoint catalog (" + std::to_string(model.cfg.num_items) +
                          " items) does not match bundle (" + std::to_string(bundle.num_items()) + ")");

    const auto scorer = make_scorer(model);
    const auto metrics = evaluate(scorer, bundle.test_instances);
    print_metrics(metrics);

    LongTailReport tail;
    if (long_tail) {
        tail = long_tail_report(scorer, bundle.test_instances, bundle.popularity);
        std::printf("long-tail breakdown (top 5%% of items by clicks vs rest)\n");
        std::printf("  popular: %ld items, %ld instances", static_cast<long>(tail.popular_items),
                    static_cast<long>(tail.popular_instances));
        if (tail.popular_instances > 0)
            std::printf(", P@5 %.2f, share of P@5 %.2f", tail.popular_p5, tail.popular_share);
        std::printf("\n  long-tail: %ld items, %ld instances", static_cast<long>(tail.tail_items),
                    static_cast<long>(tail.tail_instances));
        if (tail.tail_instances > 0)
            std::printf(", P@5 %.2f, share of P@5 %.2f", tail.tail_p5, tail.tail_share);
        std::printf("\n");
    }

    if (!o.out_dir.empty()) {
        CommonOpts oo = o;
        const fs::path dir = prepare_out_dir(oo);
        std::ofstream tsv((dir / "metrics.tsv").string());
        tsv << "metric\tvalue\n"
            << "p5\t" << metrics.p5 << "\nmrr5\t" << metrics.mrr5 << "\np10\t" << metrics.p10
            << "\nmrr10\t" << metrics.mrr10 << "\ninstances\t" << metrics.instances << "\n";
        if (long_tail) {
            tsv << "popular_p5\t" << tail.popular_p5 << "\ntail_p5\t" << tail.tail_p5
                << "\npopular_share\t" << tail.popular_share << "\ntail_share\t" << tail.tail_share
                << "\n";
        }
        if (!tsv) throw IoError("failed writing metrics.tsv");
        std::cout << "metrics written to " << (dir / "metrics.tsv").string() << "\n";
    }

    if (!plot_data.empty()) {
        if (train_log.empty())
            throw ConfigError("--plot-data requires --train-log to supply the curves");
        std::ifstream in(train_log);
        if (!in) throw IoError("cannot open training log '" + train_log + "'");
        std::string header;
        std::getline(in, header);
        std::vector<std::array<double, 8>> rows;
        std::array<double, 8> row{};
        while (in >> row[0] >> row[1] >> row[2] >> row[3] >> row[4] >> row[5] >> row[6] >> row[7])
            rows.push_back(row);
        std::ofstream out(plot_data);
        if (!out) throw IoError("cannot write plot data '" + plot_data + "'");
        const char* series[] = {"l_rec", "l_cl", "l_pred", "l_soft", "total", "val_p5"};
        for (std::size_t s = 0; s < 6; ++s) {
            out << "# series: " << series[s] << "\n";
            for (const auto& r : rows) out << r[0] << '\t' << r[s + 1] << '\n';
            out << "\n";
        }
        std::cout << "plot data written to " << plot_data << "\n";
    }
    return kExitOk;
}

int cmd_compress_report(bool reference_tables, const std::string& items, const std::string& dims,
                        std::int64_t rank, std::int64_t stp_n, std::int64_t num_items,
                        std::int64_t embed_dim, const std::string& mode_str) {
    if (reference_tables) {
        std::printf("size analytics: 20000 items as 10x10x25x8, 128 dims as 4x4x4x2, n = 2\n");
        std::printf("%8s %10s %8s %10s %8s\n", "rank", "ttd size", "rate", "sttd size", "rate");
        for (const auto& row : reference_size_rows()) {
            auto ttd_shape = reference_size_shape(row.rank, 1);
            auto sttd_shape = reference_size_shape(row.rank, 2);
            const auto ttd = compression_report(ttd_shape, EmbeddingMode::kTtd);
            const auto sttd = compression_report(sttd_shape, EmbeddingMode::kSttd);
            std::printf("%8lld %10lld %8.0f %10lld %8.0f\n", static_cast<long long>(row.rank),
                        static_cast<long long>(ttd.params_compressed), std::round(ttd.rate_grid),
                        static_cast<long long>(sttd.params_compressed), std::round(sttd.rate_grid));
        }
        std::printf("\nstudent configurations (rate = catalog parameters / core parameters)\n");
        std::printf("%-14s %-14s %12s %8s\n", "dataset", "config", "core params", "rate");
        for (const auto& rc : reference_student_configs()) {
            const auto rep = compression_report(rc.shape(), EmbeddingMode::kSttd);
            std::printf("%-14s %-14s %12lld %8.0f\n", rc.dataset, rc.label,
                        static_cast<long long>(rep.params_compressed), std::round(rep.rate));
        }
        return kExitOk;
    }

    FactorizedShape shape;
    shape.item_factors = parse_int_list(items);
    shape.dim_factors = parse_int_list(dims);
    shape.rank = rank;
    shape.stp_divisor = stp_n;
    shape.num_items = num_items > 0 ? num_items : shape.padded_items();
    shape.embed_dim = embed_dim;
    if (shape.embed_dim <= 0) {
        shape.embed_dim = 1;
        for (auto f : shape.dim_factors) shape.embed_dim *= f;
    }
    const EmbeddingMode mode = mode_from_name(mode_str);
    const auto rep = compression_report(shape, mode);
    std::printf("uncompressed parameters: %lld (%lld items x %lld dims)\n",
                static_cast<long long>(rep.params_original), static_cast<long long>(shape.num_items),
                static_cast<long long>(shape.embed_dim));
    std::printf("padded grid parameters:  %lld\n", static_cast<long long>(rep.params_grid));
    std::printf("core parameters:         %lld (", static_cast<long long>(rep.params_compressed));
    for (std::size_t i = 0; i < rep.per_core_sizes.size(); ++i)
        std::printf("%s%lld", i ? " + " : "", static_cast<long long>(rep.per_core_sizes[i]));
    std::printf(")\n");
    std::printf("compression rate:        %.3f (grid numerator %.3f)\n", rep.rate, rep.rate_grid);
    return kExitOk;
}

int cmd_benchmark(const std::string& ckpt_path, const std::string& bundle_path, int repetitions) {
    auto bundle = load_bundle(bundle_path);
    auto model = model_from_checkpoint(ckpt_path);
    if (model.cfg.num_items != bundle.num_items())
        throw ConfigError("checkpoint catalog does not match bundle");
    const auto scorer = make_scorer(model);
    const double secs = latency_benchmark(scorer, bundle.test_instances, repetitions);
    std::printf("prediction time per 100 sessions: %.6f s (median of %d repetitions, single thread)\n",
                secs, repetitions);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"session recommender with factorized embeddings and distillation"};
    app.require_subcommand(1);

    CommonOpts common;
    int rc = kExitOk;
    std::function<int()> action;

    auto* prep = app.add_subcommand("preprocess", "ingest an event log into a dataset bundle");
    static std::string prep_input;
    static std::string prep_delim = ",";
    prep->add_option("--input", prep_input, "delimited event log (session,item,timestamp)")->required();
    prep->add_option("--delimiter", prep_delim, "field delimiter (default ',')");
    add_common(prep, common);
    prep->callback([&] { action = [&] { return cmd_preprocess(common, prep_input, prep_delim[0]); }; });

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset bundle");
    add_common(synth, common);
    synth->callback([&] { action = [&] { return cmd_synth(common); }; });

    auto* teach = app.add_subcommand("train-teacher", "train the dense model");
    static std::string teach_bundle;
    teach->add_option("--bundle", teach_bundle, "dataset bundle")->required();
    add_common(teach, common);
    teach->callback([&] { action = [&] { return cmd_train_teacher(common, teach_bundle); }; });

    auto* dist = app.add_subcommand("distill", "train the compressed student against a frozen teacher");
    static std::string dist_bundle, dist_teacher;
    static bool no_cl = false, no_pred = false, no_soft = false, no_kd = false;
    dist->add_option("--bundle", dist_bundle, "dataset bundle")->required();
    dist->add_option("--teacher", dist_teacher, "teacher checkpoint")->required();
    dist->add_flag("--no-cl", no_cl, "drop the contrastive task");
    dist->add_flag("--no-pred", no_pred, "drop the predictive task");
    dist->add_flag("--no-soft", no_soft, "drop soft-target distillation");
    dist->add_flag("--no-kd", no_kd, "drop all distillation tasks (plain student training)");
    add_common(dist, common);
    dist->callback([&] {
        action = [&] { return cmd_distill(common, dist_bundle, dist_teacher, no_cl, no_pred, no_soft, no_kd); };
    });

    auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a bundle's test split");
    static std::string eval_ckpt, eval_bundle, eval_train_log, eval_plot;
    static bool eval_tail = false;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--bundle", eval_bundle, "dataset bundle")->required();
    eval->add_flag("--long-tail", eval_tail, "add the popularity-stratified breakdown");
    eval->add_option("--train-log", eval_train_log, "training log to convert with --plot-data");
    eval->add_option("--plot-data", eval_plot, "write (x, y) series extracted from --train-log");
    eval->add_option("--out", common.out_dir, "directory for metrics.tsv");
    eval->add_flag("--force", common.force, "allow writing into a non-empty output directory");
    eval->add_option("--seed", common.seed, "unused; accepted for interface uniformity");
    eval->callback([&] {
        action = [&] {
            return cmd_evaluate(common, eval_ckpt, eval_bundle, eval_tail, eval_train_log, eval_plot);
        };
    });

    auto* comp = app.add_subcommand("compress-report", "parameter counts and compression rates");
    static std::string comp_items, comp_dims, comp_mode = "sttd";
    static std::int64_t comp_rank = 1, comp_n = 1, comp_items_count = 0, comp_dim = 0;
    static bool comp_reference = false;
    comp->add_flag("--reference-tables", comp_reference, "emit the built-in reference configurations");
    comp->add_option("--items", comp_items, "item factorization, e.g. 10,10,25,8");
    comp->add_option("--dims", comp_dims, "dimension factorization, e.g. 4,4,4,2");
    comp->add_option("--rank", comp_rank, "shared intermediate rank R");
    comp->add_option("--stp-n", comp_n, "semi-tensor block width n (1 = plain tensor train)");
    comp->add_option("--num-items", comp_items_count, "catalog size (defaults to the factor product)");
    comp->add_option("--embed-dim", comp_dim, "embedding width (defaults to the factor product)");
    comp->add_option("--mode", comp_mode, "ttd or sttd (default sttd)");
    comp->callback([&] {
        action = [&] {
            if (!comp_reference && (comp_items.empty() || comp_dims.empty()))
                throw ConfigError("compress-report needs --items and --dims (or --reference-tables)");
            return cmd_compress_report(comp_reference, comp_items, comp_dims, comp_rank, comp_n,
                                       comp_items_count, comp_dim, comp_mode);
        };
    });

    auto* bench = app.add_subcommand("benchmark", "inference latency per 100 sessions");
    static std::string bench_ckpt, bench_bundle;
    static int bench_reps = 5;
    bench->add_option("--checkpoint", bench_ckpt, "model checkpoint")->required();
    bench->add_option("--bundle", bench_bundle, "dataset bundle")->required();
    bench->add_option("--repetitions", bench_reps, "timed repetitions (default 5)");
    bench->callback([&] { action = [&] { return cmd_benchmark(bench_ckpt, bench_bundle, bench_reps); }; });

    try {
        app.parse(argc, argv);
        if (action) rc = action();
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::out_of_range& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    return rc;
}
