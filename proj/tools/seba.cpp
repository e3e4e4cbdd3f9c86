// Command-line front end: synth, pretrain, eval, ablate, theory, analyze.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <seba/analysis.hpp>
#include <seba/config.hpp>
#include <seba/experiment.hpp>
#include <seba/synthetic.hpp>
#include <seba/theory.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace seba;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

using Overrides = std::map<std::string, std::string>;

// Registers a flag whose value, when given, overrides config key `key`.
void add_override(CLI::App* sub, const std::string& flag, const std::string& key, Overrides& store,
                  const std::string& help) {
    sub->add_option_function<std::string>(flag, [&store, key](const std::string& v) { store[key] = v; }, help);
}

Config build_config(const std::string& path, const Overrides& overrides, const std::vector<std::string>& sets) {
    Config cfg = path.empty() ? Config{} : Config::load(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw Error(ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : overrides) {
        cfg.set(k, v);
    }
    return cfg;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw Error(ErrorKind::Config, what + " path is not set");
    }
    if (!fs::is_regular_file(path)) {
        throw Error(ErrorKind::Config, what + " file '" + path + "' does not exist");
    }
}

Dataset load_configured_data(const ExperimentConfig& e) {
    require_file(e.data_csv, "data");
    require_file(e.data_schema, "schema");
    return load_csv(e.data_csv, e.data_schema);
}

std::ofstream open_output(const std::string& path) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::Format, "cannot write '" + path + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// pretrain

template <typename Scalar>
void run_pretrain(const ExperimentConfig& e, const std::string& out_dir) {
    PreparedData data = prepare(load_configured_data(e), e.seed, e.normalize);
    const auto members = train_members<Scalar>(data, e, e.ratios);
    Manifest manifest;
    manifest.data_csv = fs::absolute(e.data_csv).string();
    manifest.data_schema = fs::absolute(e.data_schema).string();
    manifest.dataset_name = e.dataset_name;
    manifest.seed = e.seed;
    manifest.precision = e.precision;
    save_members(out_dir, members, data.preprocessor, manifest);
    auto report = open_output((fs::path(out_dir) / "pretrain_report.csv").string());
    write_pretrain_csv(report, members);
    for (std::size_t k = 0; k < members.size(); ++k) {
        const auto& r = members[k].report;
        std::printf("member %zu ratio %s: %d epochs, best epoch %d, validation loss %.6f\n", k,
                    members[k].stack.ratio.label().c_str(), r.stopped_epoch, r.best_epoch, r.best_validation_loss);
    }
    std::printf("wrote %zu checkpoints to %s\n", members.size(), out_dir.c_str());
}

// ---------------------------------------------------------------------------------------------
// eval

template <typename Scalar>
void run_eval(const std::string& dir, const Manifest& manifest, const ExperimentConfig& e, const std::string& out_csv,
              const std::string& summary_csv) {
    require_file(manifest.data_csv, "data");
    require_file(manifest.data_schema, "schema");
    auto loaded = load_members<Scalar>(dir, manifest);
    Dataset ds = load_csv(manifest.data_csv, manifest.data_schema);
    check_schema(loaded.preprocessor, ds);
    PreparedData data;
    data.split = split(ds, manifest.seed);
    data.dataset = std::move(ds);
    data.preprocessor = std::move(loaded.preprocessor);
    const HeadConfig head = resolved_head(e, e.protocol.k_shot);
    const auto result = evaluate_stacks<Scalar>(loaded.stacks, data, e.protocol, head);

    auto out = open_output(out_csv);
    write_eval_csv(out, result.ensemble);
    auto summary = open_output(summary_csv);
    std::vector<EvalReport> all{result.ensemble};
    all.insert(all.end(), result.members.begin(), result.members.end());
    write_summary_csv(summary, all);
    std::printf("%s %d-way %d-shot head=%s: ensemble accuracy %.4f (std %.4f) over %zu episodes\n",
                result.ensemble.dataset.c_str(), result.ensemble.n_way, result.ensemble.k_shot,
                result.ensemble.head.c_str(), result.ensemble.mean, result.ensemble.std, result.ensemble.records.size());
}

// ---------------------------------------------------------------------------------------------
// ablate

struct AblationRow {
    std::string variant;
    std::string head;
    Index projector_input_dim = 0;
    double mean = 0.0;
    double std = 0.0;
};

template <typename Scalar>
std::vector<AblationRow> run_ablation(const std::string& axis, const Config& base_cfg) {
    const ExperimentConfig base = resolve(base_cfg);
    const Dataset ds = load_configured_data(base);
    const int k_shot = base.protocol.k_shot;
    std::vector<AblationRow> rows;

    auto row_of = [](const std::string& variant, const EvalReport& r, Index proj) {
        return AblationRow{variant, r.head, proj, r.mean, r.std};
    };
    // Train the configured ensemble under a config variant and report the fused accuracy.
    auto ensemble_row = [&](const std::string& variant, const std::string& key, const std::string& value) {
        Config c = base_cfg;
        c.set(key, value);
        const ExperimentConfig e = resolve(c);
        const PreparedData data = prepare(ds, e.seed, e.normalize);
        const auto stacks = stacks_of(train_members<Scalar>(data, e, e.ratios));
        const auto res = evaluate_stacks<Scalar>(stacks, data, e.protocol, resolved_head(e, k_shot));
        rows.push_back(row_of(variant, res.ensemble, stacks.front().projector_input_dim()));
    };

    if (axis == "conditioning") {
        ensemble_row("conditioned", "model.conditioned", "true");
        ensemble_row("unconditioned", "model.conditioned", "false");
    } else if (axis == "imputation") {
        ensemble_row("zero", "pretrain.imputation", "zero");
        ensemble_row("marginal", "pretrain.imputation", "marginal");
    } else if (axis == "normalization") {
        ensemble_row("normalized", "pretrain.normalize", "true");
        ensemble_row("raw", "pretrain.normalize", "false");
    } else if (axis == "ratio") {
        const PreparedData data = prepare(ds, base.seed, base.normalize);
        std::vector<RatioPolicy> ratios;
        for (double r : kDefaultRatios) {
            ratios.push_back(RatioPolicy::constant(r));
        }
        ratios.push_back(RatioPolicy::random_choice());
        const auto stacks = stacks_of(train_members<Scalar>(data, base, ratios));
        const HeadConfig head = resolved_head(base, k_shot);
        const std::span<const EncoderStack<Scalar>> fixed(stacks.data(), kDefaultRatios.size());
        const auto res = evaluate_stacks<Scalar>(fixed, data, base.protocol, head);
        for (std::size_t k = 0; k < fixed.size(); ++k) {
            rows.push_back(row_of(fixed[k].ratio.label(), res.members[k], fixed[k].projector_input_dim()));
        }
        rows.push_back(row_of("ensemble", res.ensemble, fixed.front().projector_input_dim()));
        const std::span<const EncoderStack<Scalar>> random(stacks.data() + kDefaultRatios.size(), 1);
        const auto res_random = evaluate_stacks<Scalar>(random, data, base.protocol, head);
        rows.push_back(row_of("random", res_random.ensemble, random.front().projector_input_dim()));
    } else if (axis == "classifier") {
        const PreparedData data = prepare(ds, base.seed, base.normalize);
        const auto stacks = stacks_of(train_members<Scalar>(data, base, base.ratios));
        for (HeadKind kind : {HeadKind::ProtoCos, HeadKind::ProtoEucl, HeadKind::Linear, HeadKind::KnnCos,
                              HeadKind::KnnEucl, HeadKind::Finetune}) {
            HeadConfig head = base.head_config;
            head.kind = kind;
            const auto res = evaluate_stacks<Scalar>(stacks, data, base.protocol, head);
            rows.push_back(row_of(to_string(kind), res.ensemble, stacks.front().projector_input_dim()));
        }
    } else {
        throw Error(ErrorKind::Config, "unknown ablation axis '" + axis + "'");
    }
    return rows;
}

void write_ablation_csv(std::ostream& out, const std::string& axis, int k_shot, const std::vector<AblationRow>& rows) {
    out << "axis,variant,k_shot,head,projector_input_dim,mean,std\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%lld,%.6f,%.6f\n", axis.c_str(), r.variant.c_str(), k_shot,
                      r.head.c_str(), static_cast<long long>(r.projector_input_dim), r.mean, r.std);
        out << buf;
    }
}

// ---------------------------------------------------------------------------------------------
// theory

std::vector<double> parse_number_list(const std::string& flag, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : detail::split_csv_line(text)) {
        auto v = detail::parse_double(item);
        if (!v) {
            throw Error(ErrorKind::Config, flag + ": '" + item + "' is not a number");
        }
        out.push_back(*v);
    }
    if (out.empty()) {
        throw Error(ErrorKind::Config, flag + " is empty");
    }
    return out;
}

struct TheoryOptions {
    std::size_t dim = 50;
    std::string delta_sq_grid = "0,4,16,36";
    std::string n_grid = "5,10,25,50";
    long long trials = 100000;
    long long subsets = 1000;
    std::uint64_t seed = 0;
    std::string offset = "random";
    std::string out = "theory.csv";
    std::string bound_out;
    unsigned workers = 0;
};

void run_theory(const TheoryOptions& o) {
    if (o.trials < 1) {
        throw Error(ErrorKind::Config, "--trials must be at least 1");
    }
    if (o.subsets < 1) {
        throw Error(ErrorKind::Config, "--subsets must be at least 1");
    }
    if (o.dim < 1) {
        throw Error(ErrorKind::Config, "--dim must be at least 1");
    }
    const auto deltas = parse_number_list("--delta-sq-grid", o.delta_sq_grid);
    std::vector<std::size_t> ns;
    for (double v : parse_number_list("--n-grid", o.n_grid)) {
        if (v < 1 || v > static_cast<double>(o.dim) || v != std::floor(v)) {
            throw Error(ErrorKind::Config, "--n-grid entries must be integers in [1, dim]");
        }
        ns.push_back(static_cast<std::size_t>(v));
    }
    for (double d : deltas) {
        if (d < 0) {
            throw Error(ErrorKind::Config, "--delta-sq-grid entries must be non-negative");
        }
    }
    const auto n_subsets = static_cast<std::size_t>(std::min(o.subsets, o.trials));
    const std::size_t per_subset = static_cast<std::size_t>(o.trials) / n_subsets;

    std::vector<MismatchEstimate> grid;
    for (std::size_t a = 0; a < deltas.size(); ++a) {
        Rng offset_rng = make_rng(o.seed, "offset", a);
        const GaussianPairSpec spec = o.offset == "uniform" ? GaussianPairSpec::uniform(o.dim, deltas[a])
                                                            : GaussianPairSpec::random_direction(o.dim, deltas[a], offset_rng);
        for (std::size_t b = 0; b < ns.size(); ++b) {
            Rng rng = make_rng(o.seed, "cell", a * ns.size() + b);
            grid.push_back(expected_mismatch(spec, ns[b], n_subsets, per_subset, rng, o.workers));
        }
    }
    auto out = open_output(o.out);
    write_theory_csv(out, grid);
    const BoundReport bound = check_bound(grid);
    char line[256];
    std::snprintf(line, sizeof line, "%.6g,%d,%d,%.6g,%.6g,%.6g\n", bound.c_star, bound.floored ? 1 : 0,
                  bound.pass ? 1 : 0, bound.slope, bound.intercept, bound.floor);
    if (!o.bound_out.empty()) {
        auto b = open_output(o.bound_out);
        b << "c_star,floored,pass,slope,intercept,floor\n" << line;
    }
    std::printf("C* = %.6g (%s), log-linear slope %.6g, pass = %s\n", bound.c_star,
                bound.floored ? "floored" : "unfloored", bound.slope, bound.pass ? "yes" : "no");
}

// ---------------------------------------------------------------------------------------------
// analyze

struct AnalyzeOptions {
    std::string dir;
    std::string data;
    std::string schema;
    double ratio = 0.2;
    int separations = 100;
    std::size_t k_max = 10;
    std::size_t k = 10;
    int member = -1;
    long long seed = -1;
    std::string out_dir;
};

template <typename Scalar>
void run_analyze(const AnalyzeOptions& o, const Manifest& manifest) {
    const std::string csv = o.data.empty() ? manifest.data_csv : o.data;
    const std::string schema = o.schema.empty() ? manifest.data_schema : o.schema;
    require_file(csv, "data");
    require_file(schema, "schema");
    auto loaded = load_members<Scalar>(o.dir, manifest);
    const Dataset ds = load_csv(csv, schema);
    if (!ds.labels) {
        throw Error(ErrorKind::Analysis, "analysis needs a labelled dataset");
    }
    check_schema(loaded.preprocessor, ds);
    std::size_t member = 0;
    if (o.member >= 0) {
        member = static_cast<std::size_t>(o.member);
        if (member >= loaded.stacks.size()) {
            throw Error(ErrorKind::Config, "--member " + std::to_string(o.member) + " out of range");
        }
    } else {
        for (std::size_t k = 0; k < loaded.stacks.size(); ++k) {
            const auto& r = loaded.stacks[k].ratio;
            if (!r.random && std::abs(r.fixed - 0.2) < 1e-12) {
                member = k;
                break;
            }
        }
    }
    const Matrix<Scalar> encoded = encode_all<Scalar>(loaded.preprocessor, ds);
    const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : manifest.seed;
    Rng rng = make_rng(seed, "analysis");
    const auto curve = neighbor_fraction_curve(encoded, *ds.labels, loaded.preprocessor, o.ratio, o.separations, o.k_max, rng);
    const auto table = latent_consistency(encoded, loaded.stacks[member], *ds.labels, o.k);
    const std::string out_dir = o.out_dir.empty() ? o.dir : o.out_dir;
    auto a = open_output((fs::path(out_dir) / "neighbor_fraction.csv").string());
    write_curve_csv(a, curve);
    auto b = open_output((fs::path(out_dir) / "latent_consistency.csv").string());
    write_consistency_csv(b, table);
    std::printf("same-class fraction k=1: %.4f, k=%zu: %.4f; 10-NN consistency input %.3f latent %.3f (member %zu)\n",
                curve.mean_fraction.front(), o.k_max, curve.mean_fraction.back(), table.overall_input,
                table.overall_latent, member);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised tabular pretraining with target-view neighbor alignment"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a seeded isotropic Gaussian dataset and its schema");
    GaussianBlobsConfig blobs;
    std::string synth_csv = "synthetic.csv";
    std::string synth_schema = "synthetic.schema.json";
    synth->add_option("--rows", blobs.n_rows, "Number of rows")->check(CLI::PositiveNumber);
    synth->add_option("--dim", blobs.dim, "Number of numerical columns")->check(CLI::PositiveNumber);
    synth->add_option("--classes", blobs.n_classes, "Number of classes")->check(CLI::PositiveNumber);
    synth->add_option("--separation", blobs.separation, "Distance between class means")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", blobs.seed, "Generator seed");
    synth->add_option("--csv", synth_csv, "Output CSV path");
    synth->add_option("--schema", synth_schema, "Output schema path");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Pretrain one encoder stack per ratio and write checkpoints");
    std::string pre_config;
    std::string pre_out = "checkpoints";
    std::vector<std::string> pre_sets;
    Overrides pre_over;
    pre->add_option("--config", pre_config, "Config file")->required();
    pre->add_option("--out", pre_out, "Checkpoint directory");
    pre->add_option("--set", pre_sets, "Override a config key (section.key=value)");
    add_override(pre, "--seed", "pretrain.seed", pre_over, "Master seed");
    add_override(pre, "--ratios", "pretrain.ratios", pre_over, "Comma-separated ratios or 'random'");
    add_override(pre, "--max-epochs", "pretrain.max_epochs", pre_over, "Epoch cap");
    add_override(pre, "--patience", "pretrain.patience", pre_over, "Early-stopping patience");

    // eval
    auto* ev = app.add_subcommand("eval", "Few-shot evaluation of a checkpoint directory");
    std::string ev_dir;
    std::string ev_config;
    std::string ev_out;
    std::string ev_summary;
    std::vector<std::string> ev_sets;
    Overrides ev_over;
    ev->add_option("--checkpoints", ev_dir, "Checkpoint directory written by pretrain")->required();
    ev->add_option("--config", ev_config, "Optional config with [eval] defaults");
    ev->add_option("--out", ev_out, "Per-episode CSV (default <checkpoints>/eval.csv)");
    ev->add_option("--summary", ev_summary, "Summary CSV (default <checkpoints>/eval_summary.csv)");
    ev->add_option("--set", ev_sets, "Override a config key (section.key=value)");
    add_override(ev, "--n-way", "eval.n_way", ev_over, "Classes per episode (0 = all)");
    add_override(ev, "--k-shot", "eval.k_shot", ev_over, "Support rows per class");
    add_override(ev, "--n-query", "eval.n_query", ev_over, "Query rows per class");
    add_override(ev, "--episodes", "eval.episodes", ev_over, "Episodes per seed");
    add_override(ev, "--seeds", "eval.seeds", ev_over, "Number of evaluation seeds");
    add_override(ev, "--head", "eval.head", ev_over, "proto-cos, proto-eucl, linear, knn-cos, knn-eucl or finetune");
    add_override(ev, "--seed", "pretrain.seed", ev_over, "Master seed (default: the pretraining seed)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train and evaluate the variants of one design axis");
    std::string ab_config;
    std::string ab_axis;
    std::string ab_out = "ablation.csv";
    std::vector<std::string> ab_sets;
    Overrides ab_over;
    ab->add_option("--config", ab_config, "Config file")->required();
    ab->add_option("--axis", ab_axis, "Design axis")
        ->required()
        ->check(CLI::IsMember({"conditioning", "imputation", "normalization", "ratio", "classifier"}));
    ab->add_option("--out", ab_out, "Comparison CSV");
    ab->add_option("--set", ab_sets, "Override a config key (section.key=value)");
    add_override(ab, "--seed", "pretrain.seed", ab_over, "Master seed");
    add_override(ab, "--k-shot", "eval.k_shot", ab_over, "Support rows per class");
    add_override(ab, "--episodes", "eval.episodes", ab_over, "Episodes per seed");
    add_override(ab, "--seeds", "eval.seeds", ab_over, "Number of evaluation seeds");

    // theory
    auto* th = app.add_subcommand("theory", "Monte Carlo check of the mismatch-probability bound");
    TheoryOptions theory;
    th->add_option("--dim", theory.dim, "Dimension D");
    th->add_option("--delta-sq-grid", theory.delta_sq_grid, "Comma-separated squared separations");
    th->add_option("--n-grid", theory.n_grid, "Comma-separated subset sizes");
    th->add_option("--trials", theory.trials, "Pooled trials per grid cell");
    th->add_option("--subsets", theory.subsets, "Subsets sampled per grid cell");
    th->add_option("--seed", theory.seed, "Seed");
    th->add_option("--offset", theory.offset, "Offset direction")->check(CLI::IsMember({"random", "uniform"}));
    th->add_option("--out", theory.out, "Estimates CSV");
    th->add_option("--bound-out", theory.bound_out, "Bound report CSV");
    th->add_option("--workers", theory.workers, "Worker threads (0 = hardware concurrency)");

    // analyze
    auto* an = app.add_subcommand("analyze", "Neighbor label-consistency diagnostics");
    AnalyzeOptions analyze;
    an->add_option("--checkpoints", analyze.dir, "Checkpoint directory")->required();
    an->add_option("--data", analyze.data, "Data CSV (default: from the manifest)");
    an->add_option("--schema", analyze.schema, "Schema file (default: from the manifest)");
    an->add_option("--ratio", analyze.ratio, "Separation ratio for the neighbor curve");
    an->add_option("--separations", analyze.separations, "Random separations")->check(CLI::PositiveNumber);
    an->add_option("--k-max", analyze.k_max, "Largest k of the neighbor curve")->check(CLI::PositiveNumber);
    an->add_option("--k", analyze.k, "Neighbors for the consistency table")->check(CLI::PositiveNumber);
    an->add_option("--member", analyze.member, "Stack used for the latent space (default: ratio 0.2)");
    an->add_option("--seed", analyze.seed, "Seed (default: the pretraining seed)");
    an->add_option("--out-dir", analyze.out_dir, "Output directory (default: the checkpoint directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            save_dataset(make_gaussian_blobs(blobs), synth_csv, synth_schema);
            std::printf("wrote %s and %s\n", synth_csv.c_str(), synth_schema.c_str());
        } else if (pre->parsed()) {
            const ExperimentConfig e = resolve(build_config(pre_config, pre_over, pre_sets));
            if (e.precision == Precision::F64) {
                run_pretrain<double>(e, pre_out);
            } else {
                run_pretrain<float>(e, pre_out);
            }
        } else if (ev->parsed()) {
            const Manifest manifest = Manifest::read(ev_dir);
            Config cfg = build_config(ev_config, {}, ev_sets);
            cfg.set("pretrain.seed", std::to_string(manifest.seed));
            cfg.set("data.name", manifest.dataset_name);
            for (const auto& [k, v] : ev_over) {
                cfg.set(k, v);
            }
            const ExperimentConfig e = resolve(cfg);
            const std::string out = ev_out.empty() ? (fs::path(ev_dir) / "eval.csv").string() : ev_out;
            const std::string summary = ev_summary.empty() ? (fs::path(ev_dir) / "eval_summary.csv").string() : ev_summary;
            if (manifest.precision == Precision::F64) {
                run_eval<double>(ev_dir, manifest, e, out, summary);
            } else {
                run_eval<float>(ev_dir, manifest, e, out, summary);
            }
        } else if (ab->parsed()) {
            const Config cfg = build_config(ab_config, ab_over, ab_sets);
            const ExperimentConfig e = resolve(cfg);
            const auto rows = e.precision == Precision::F64 ? run_ablation<double>(ab_axis, cfg)
                                                            : run_ablation<float>(ab_axis, cfg);
            auto out = open_output(ab_out);
            write_ablation_csv(out, ab_axis, e.protocol.k_shot, rows);
            for (const auto& r : rows) {
                std::printf("%-14s %-10s accuracy %.4f (std %.4f)\n", r.variant.c_str(), r.head.c_str(), r.mean, r.std);
            }
        } else if (th->parsed()) {
            run_theory(theory);
        } else if (an->parsed()) {
            const Manifest manifest = Manifest::read(analyze.dir);
            if (manifest.precision == Precision::F64) {
                run_analyze<double>(analyze, manifest);
            } else {
                run_analyze<float>(analyze, manifest);
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "seba: %s\n", e.what());
        return e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Schema ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "seba: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
