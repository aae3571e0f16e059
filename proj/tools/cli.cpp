#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "lpnet/eval.hpp"
#include "lpnet/logic.hpp"
#include "lpnet/oracle.hpp"
#include "lpnet/taskgen.hpp"
#include "lpnet/train.hpp"

namespace lpnet::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct Globals {
    std::uint64_t seed = 0;
    std::string config;
    std::string out_dir;
    unsigned threads = 1;
    bool deterministic = false;
};

using Meta = std::map<std::string, std::string>;

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Writes to --out, else <out-dir>/<default_name>, else stdout. Files get a manifest.
void emit(const std::string& out_flag, const Globals& g, const std::string& default_name, const Meta& meta,
          std::ostream& out, const std::function<void(std::ostream&)>& write) {
    fs::path path = out_flag;
    if (path.empty() && !g.out_dir.empty()) path = fs::path(g.out_dir) / default_name;
    if (path.empty()) {
        write(out);
        return;
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        write(os);
    }
    std::ofstream man(path.string() + ".manifest", std::ios::binary);
    write_key_values(man, meta);
    out << path.string() << '\n';
}

Atom ground_query(const std::string& text) {
    Atom a;
    try {
        a = parse_atom(text);
    } catch (const SyntaxError& e) {
        throw UsageError("--query: " + std::string(e.what()));
    }
    if (!a.is_ground()) throw UsageError("--query must be ground: " + text);
    return a;
}

std::unique_ptr<Predictor> load_predictor(const std::string& checkpoint, bool oracle) {
    if (oracle == !checkpoint.empty()) throw UsageError("give exactly one of --checkpoint or --oracle");
    if (oracle) return std::make_unique<OracleModel>();
    return load_model(checkpoint);
}

int default_iterations(const Predictor& p, int flag) {
    if (flag >= 0) return flag;
    if (auto m = dynamic_cast<const Model*>(&p)) return m->default_iterations();
    return 4;
}

std::vector<int> all_tasks() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Logic program generation, oracle, training and analysis", "lpnet"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for data generation and initialisation");
    app.add_option("--config", g.config, "key=value training config (flags take precedence)");
    app.add_option("--out-dir", g.out_dir, "Directory for artifacts");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", g.deterministic, "Single-threaded, fixed-order reductions");

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a labelled dataset");
    std::vector<int> gen_tasks;
    std::size_t gen_count = 100;
    std::string gen_tier = "validation", gen_out, gen_sweep;
    int gen_max = 0;
    std::size_t gen_per_bucket = kSweepPerBucket;
    gen->add_option("--task", gen_tasks, "Task ids (default all)")->delimiter(',')->check(CLI::Range(1, kNumTasks));
    gen->add_option("--count", gen_count, "Programs per task")->check(CLI::PositiveNumber);
    gen->add_option("--tier", gen_tier)->check(CLI::IsMember({"validation", "easy", "medium", "hard"}));
    gen->add_option("--sweep", gen_sweep, "Sweep dataset instead: steps or length")
        ->check(CLI::IsMember({"steps", "length"}));
    gen->add_option("--max", gen_max, "Largest sweep bucket")->check(CLI::PositiveNumber);
    gen->add_option("--per-bucket", gen_per_bucket, "Programs per sweep bucket")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output file (manifest written beside it)");

    // solve
    auto* solve = app.add_subcommand("solve", "Answer ground queries with the resolution oracle");
    std::string solve_program;
    std::vector<std::string> solve_queries;
    int solve_depth = SolverLimits{}.max_depth;
    solve->add_option("--program", solve_program, "Program file")->required();
    solve->add_option("--query", solve_queries, "Ground atom, e.g. e(l)")->required();
    solve->add_option("--max-depth", solve_depth)->check(CLI::PositiveNumber);

    // train
    auto* tr = app.add_subcommand("train", "Train a model");
    std::map<std::string, std::string> tr_flags;
    auto tr_opt = [&](const std::string& flag, const std::string& key, const std::string& help) {
        tr->add_option_function<std::string>(flag, [&tr_flags, key](const std::string& v) { tr_flags[key] = v; }, help);
    };
    tr_opt("--regime", "regime", "multitask or curriculum");
    tr_opt("--model", "model", "ima or lstm");
    tr_opt("--tasks", "tasks", "Comma-separated task ids");
    tr_opt("--epochs", "epochs", "Epochs");
    tr_opt("--batch-size", "batch_size", "Mini-batch size");
    tr_opt("--per-task", "per_task_count", "Training programs per task");
    tr_opt("--val-per-task", "val_per_task", "Validation programs per task");
    tr_opt("--d", "d", "Embedding and state size");
    tr_opt("--iterations", "iterations", "Reasoning steps T");
    tr_opt("--attention", "attention", "softmax or sigmoid");
    tr_opt("--embedding", "embedding", "literal or lit_rule");
    tr_opt("--unifier", "unifier", "forward or reversed");
    tr_opt("--attention-tanh", "attention_tanh", "true or false");
    tr_opt("--lr", "lr", "Adam learning rate");

    // eval
    auto* ev = app.add_subcommand("eval", "Accuracy per task and tier");
    std::string ev_ckpt, ev_out;
    bool ev_oracle = false;
    std::vector<std::string> ev_data, ev_tiers;
    std::vector<int> ev_tasks;
    std::size_t ev_count = 1000;
    int ev_iterations = -1;
    ev->add_option("--checkpoint", ev_ckpt);
    ev->add_flag("--oracle", ev_oracle, "Score the resolution oracle itself");
    ev->add_option("--data", ev_data, "Dataset files (one tier each)");
    ev->add_option("--tier", ev_tiers, "Generate test sets at these tiers instead")
        ->delimiter(',')
        ->check(CLI::IsMember({"validation", "easy", "medium", "hard"}));
    ev->add_option("--task", ev_tasks)->delimiter(',')->check(CLI::Range(1, kNumTasks));
    ev->add_option("--count", ev_count, "Generated programs per task")->check(CLI::PositiveNumber);
    ev->add_option("--iterations", ev_iterations)->check(CLI::NonNegativeNumber);
    ev->add_option("--out", ev_out);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Multi-hop or symbol-length sweep");
    std::string sw_ckpt, sw_kind = "steps", sw_data, sw_out;
    bool sw_oracle = false;
    int sw_max = 0, sw_iterations = -1;
    std::size_t sw_per_bucket = kSweepPerBucket;
    sw->add_option("--checkpoint", sw_ckpt);
    sw->add_flag("--oracle", sw_oracle);
    sw->add_option("--kind", sw_kind)->check(CLI::IsMember({"steps", "length"}));
    sw->add_option("--data", sw_data, "Stored sweep dataset (else generated from --seed)");
    sw->add_option("--max", sw_max, "Largest bucket (default 32 steps / 64 characters)")->check(CLI::PositiveNumber);
    sw->add_option("--per-bucket", sw_per_bucket)->check(CLI::PositiveNumber);
    sw->add_option("--iterations", sw_iterations, "T for the length sweep")->check(CLI::NonNegativeNumber);
    sw->add_option("--out", sw_out);

    // probe
    auto* pr = app.add_subcommand("probe", "Literal embeddings, optionally PCA-projected");
    std::string pr_ckpt, pr_out;
    std::vector<std::string> pr_literals;
    std::string pr_saturation;
    std::size_t pr_max_len = 64, pr_pca = 0;
    pr->add_option("--checkpoint", pr_ckpt)->required();
    pr->add_option("--literal", pr_literals, "Literal strings to embed");
    pr->add_option("--saturation", pr_saturation, "Embed c, cc, ccc, ... for this character");
    pr->add_option("--max-len", pr_max_len)->check(CLI::PositiveNumber);
    pr->add_option("--pca", pr_pca, "Project onto this many principal components");
    pr->add_option("--out", pr_out);

    // attention
    auto* at = app.add_subcommand("attention", "Per-iteration attention over rule slots");
    std::string at_ckpt, at_program, at_data, at_out;
    std::vector<std::string> at_queries;
    std::size_t at_index = 0;
    int at_iterations = -1;
    at->add_option("--checkpoint", at_ckpt)->required();
    at->add_option("--program", at_program, "Program file (with --query)");
    at->add_option("--query", at_queries);
    at->add_option("--data", at_data, "Dataset file (with --index)");
    at->add_option("--index", at_index);
    at->add_option("--iterations", at_iterations)->check(CLI::NonNegativeNumber);
    at->add_option("--out", at_out);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    if (g.deterministic) g.threads = 1;

    try {
        if (gen->parsed()) {
            if (gen_tasks.empty()) gen_tasks = all_tasks();
            Dataset ds;
            std::string name;
            if (!gen_sweep.empty()) {
                const auto kind = gen_sweep == "steps" ? SweepKind::steps : SweepKind::length;
                const int max = gen_max ? gen_max : (kind == SweepKind::steps ? 32 : 64);
                ds = generate_sweep_programs(kind, max, gen_per_bucket, g.seed, g.threads);
                name = "sweep-" + gen_sweep + "-seed" + std::to_string(g.seed) + ".txt";
            } else {
                ds = generate_dataset(tier_configs(gen_tasks, tier_by_name(gen_tier), g.seed), gen_count, g.threads);
                ds.manifest.tier = gen_tier;
                name = gen_tier + "-seed" + std::to_string(g.seed) + ".txt";
            }
            fs::path path = gen_out;
            if (path.empty() && !g.out_dir.empty()) path = fs::path(g.out_dir) / name;
            if (path.empty()) {
                write_samples(out, ds.samples);
            } else {
                if (path.has_parent_path()) fs::create_directories(path.parent_path());
                write_dataset(path, ds);
                out << path.string() << '\n';
            }
            return 0;
        }

        if (solve->parsed()) {
            std::vector<Atom> queries;
            for (const auto& q : solve_queries) queries.push_back(ground_query(q));
            const Solver solver(parse_program(read_file(solve_program)), SolverLimits{solve_depth, true});
            for (const auto& q : queries) out << (solver.entails(q) ? 1 : 0) << '\n';
            return 0;
        }

        if (tr->parsed()) {
            std::map<std::string, std::string> kv;
            if (!g.config.empty()) kv = read_key_values(g.config);
            const bool config_sets_det = kv.count("deterministic") > 0;
            for (const auto& [k, v] : tr_flags) kv[k] = v;
            if (app.count("--seed")) kv["seed"] = std::to_string(g.seed);
            if (app.count("--threads")) kv["threads"] = std::to_string(g.threads);
            if (app.count("--out-dir")) kv["out_dir"] = g.out_dir;
            if (g.deterministic) kv["deterministic"] = "true";
            else if (!config_sets_det) kv["deterministic"] = g.threads > 1 ? "false" : "true";
            TrainConfig cfg;
            try {
                cfg = TrainConfig::from_map(kv);
                cfg.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            if (cfg.out_dir.empty()) err << "note: no --out-dir, checkpoints are not saved\n";
            const auto run = train(cfg);
            write_train_report_csv(out, run.report);
            return 0;
        }

        if (ev->parsed()) {
            const auto model = load_predictor(ev_ckpt, ev_oracle);
            const int T = default_iterations(*model, ev_iterations);
            if (!ev_data.empty() && !ev_tiers.empty()) throw UsageError("give --data or --tier, not both");
            std::vector<Dataset> sets;
            for (const auto& p : ev_data) sets.push_back(read_dataset(p));
            if (ev_data.empty()) {
                if (ev_tiers.empty()) ev_tiers = {"easy"};
                if (ev_tasks.empty()) ev_tasks = all_tasks();
                for (const auto& tier : ev_tiers) {
                    Dataset ds = generate_dataset(tier_configs(ev_tasks, tier_by_name(tier), g.seed), ev_count, g.threads);
                    ds.manifest.tier = tier;
                    sets.push_back(std::move(ds));
                }
            }
            EvalReport r = evaluate(*model, sets, T, g.threads);
            r.meta["seed"] = std::to_string(g.seed);
            emit(ev_out, g, "eval-" + model->name() + "-T" + std::to_string(T) + "-seed" + std::to_string(g.seed) + ".csv",
                 r.meta, out, [&](std::ostream& os) { write_eval_csv(os, r); });
            return 0;
        }

        if (sw->parsed()) {
            const auto model = load_predictor(sw_ckpt, sw_oracle);
            const bool steps = sw_kind == "steps";
            const Dataset ds = !sw_data.empty()
                                   ? read_dataset(sw_data)
                                   : generate_sweep_programs(steps ? SweepKind::steps : SweepKind::length,
                                                             sw_max ? sw_max : (steps ? 32 : 64), sw_per_bucket, g.seed,
                                                             g.threads);
            if (ds.manifest.sweep_kind != sw_kind) throw UsageError("dataset is a '" + ds.manifest.sweep_kind + "' sweep");
            const int T = default_iterations(*model, sw_iterations);
            const SweepCurve c = steps ? multihop_sweep(*model, ds, g.threads) : length_sweep(*model, ds, T, g.threads);
            Meta meta{{"model", model->name()}, {"kind", sw_kind}, {"seed", std::to_string(ds.manifest.seed)},
                      {"per_bucket", std::to_string(ds.manifest.count_per_task)}};
            if (!steps) meta["iterations"] = std::to_string(T);
            emit(sw_out, g, "sweep-" + sw_kind + "-" + model->name() + "-seed" + std::to_string(ds.manifest.seed) + ".csv",
                 meta, out, [&](std::ostream& os) { write_sweep_csv(os, c); });
            return 0;
        }

        if (pr->parsed()) {
            const auto model = load_model(pr_ckpt);
            const auto* ima = dynamic_cast<const ImaModel*>(model.get());
            if (!ima) throw UsageError("probe needs an IMA checkpoint");
            std::vector<std::string> labels = pr_literals;
            if (!pr_saturation.empty()) {
                if (pr_saturation.size() != 1) throw UsageError("--saturation takes one character");
                for (auto& s : saturation_series(pr_saturation[0], pr_max_len)) labels.push_back(s);
            }
            if (labels.empty()) throw UsageError("give --literal and/or --saturation");
            const auto rows = embedding_probe(*ima, labels);
            Meta meta{{"model", ima->name()}, {"rows", std::to_string(rows.size())}};
            if (pr_pca) {
                const PcaResult p = pca_project(rows, pr_pca);
                meta["pca"] = std::to_string(pr_pca);
                meta["degenerate"] = p.degenerate ? "true" : "false";
                for (std::size_t i = 0; i < p.explained_ratio.size(); ++i)
                    meta["explained_ratio_" + std::to_string(i + 1)] = std::to_string(p.explained_ratio[i]);
                emit(pr_out, g, "pca-" + ima->name() + ".csv", meta, out,
                     [&](std::ostream& os) { write_pca_csv(os, p, labels); });
            } else {
                emit(pr_out, g, "embeddings-" + ima->name() + ".csv", meta, out,
                     [&](std::ostream& os) { write_embeddings_csv(os, labels, rows); });
            }
            return 0;
        }

        if (at->parsed()) {
            const auto model = load_model(at_ckpt);
            const auto* ima = dynamic_cast<const ImaModel*>(model.get());
            if (!ima) throw UsageError("attention needs an IMA checkpoint");
            Sample s;
            if (!at_program.empty() == !at_data.empty()) throw UsageError("give --program (with --query) or --data");
            if (!at_program.empty()) {
                if (at_queries.empty()) throw UsageError("--program needs --query");
                s.context = parse_program(read_file(at_program));
                for (const auto& q : at_queries) s.queries.push_back({ground_query(q), entails(s.context, ground_query(q))});
            } else {
                const Dataset ds = read_dataset(at_data);
                if (at_index >= ds.samples.size()) throw UsageError("--index out of range");
                s = ds.samples[at_index];
            }
            const int T = default_iterations(*ima, at_iterations);
            const auto maps = attention_maps(*ima, s, T);
            Meta meta{{"model", ima->name()}, {"iterations", std::to_string(T)}};
            for (std::size_t i = 0; i < maps.size(); ++i) {
                meta["query_" + std::to_string(i + 1)] = maps[i].query;
                meta["probability_" + std::to_string(i + 1)] = std::to_string(maps[i].probability);
            }
            emit(at_out, g, "attention-" + ima->name() + "-T" + std::to_string(T) + ".csv", meta, out,
                 [&](std::ostream& os) {
                     for (std::size_t i = 0; i < maps.size(); ++i) {
                         if (i) os << '\n';
                         os << "# query " << maps[i].query << " target " << maps[i].target << '\n';
                         write_attention_csv(os, maps[i]);
                     }
                 });
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace lpnet::cli
