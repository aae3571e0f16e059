#include "lpnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "lpnet/eval.hpp"
#include "lpnet/parallel.hpp"

namespace lpnet {

std::string to_string(Regime r) { return r == Regime::multitask ? "multitask" : "curriculum"; }
std::string to_string(ModelKind k) { return k == ModelKind::ima ? "ima" : "lstm"; }

Regime parse_regime(std::string_view s) {
    if (s == "multitask") return Regime::multitask;
    if (s == "curriculum") return Regime::curriculum;
    throw std::invalid_argument("unknown regime '" + std::string(s) + "' (multitask|curriculum)");
}

ModelKind parse_model_kind(std::string_view s) {
    if (s == "ima") return ModelKind::ima;
    if (s == "lstm") return ModelKind::lstm;
    throw std::invalid_argument("unknown model '" + std::string(s) + "' (ima|lstm)");
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        const int v = std::stoi(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad integer '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        T out;
        if constexpr (std::is_same_v<T, double>) out = std::stod(v, &used);
        else if constexpr (std::is_same_v<T, int>) out = std::stoi(v, &used);
        else {
            if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
            out = static_cast<T>(std::stoull(v, &used));
        }
        if (used != v.size()) throw std::invalid_argument("trailing text");
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": bad value '" + v + "'");
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (tasks.empty()) throw std::invalid_argument("tasks must not be empty");
    std::set<int> seen;
    for (int t : tasks) {
        if (t < 1 || t > kNumTasks) throw std::invalid_argument("task " + std::to_string(t) + " out of range 1..12");
        if (!seen.insert(t).second) throw std::invalid_argument("task " + std::to_string(t) + " listed twice");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (batch_size < tasks.size())
        throw InfeasibleBatch("batch_size " + std::to_string(batch_size) + " cannot hold one sample of each of " +
                              std::to_string(tasks.size()) + " tasks");
    if (per_task_count < 1) throw std::invalid_argument("per_task_count must be >= 1");
    if (val_per_task < 1) throw std::invalid_argument("val_per_task must be >= 1");
    if (!(adam.lr > 0)) throw std::invalid_argument("lr must be positive");
    ima.validate();
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    return {{"regime", to_string(regime)},
            {"model", to_string(model)},
            {"tasks", join_ints(tasks)},
            {"epochs", std::to_string(epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"per_task_count", std::to_string(per_task_count)},
            {"val_per_task", std::to_string(val_per_task)},
            {"d", std::to_string(ima.d)},
            {"iterations", std::to_string(ima.iterations)},
            {"attention", to_string(ima.attention)},
            {"embedding", to_string(ima.embedding)},
            {"unifier", to_string(ima.unifier)},
            {"attention_tanh", ima.attention_tanh ? "true" : "false"},
            {"seed", std::to_string(seed)},
            {"lr", fmt_double(adam.lr)},
            {"beta1", fmt_double(adam.beta1)},
            {"beta2", fmt_double(adam.beta2)},
            {"eps", fmt_double(adam.eps)},
            {"threads", std::to_string(threads)},
            {"deterministic", deterministic ? "true" : "false"},
            {"out_dir", out_dir.string()},
            {"checkpoint_every_epoch", checkpoint_every_epoch ? "true" : "false"}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv, TrainConfig c) {
    for (const auto& [k, v] : kv) {
        if (k == "regime") c.regime = parse_regime(v);
        else if (k == "model") c.model = parse_model_kind(v);
        else if (k == "tasks") c.tasks = parse_ints(v);
        else if (k == "epochs") c.epochs = parse_number<int>(k, v);
        else if (k == "batch_size") c.batch_size = parse_number<std::size_t>(k, v);
        else if (k == "per_task_count") c.per_task_count = parse_number<std::size_t>(k, v);
        else if (k == "val_per_task") c.val_per_task = parse_number<std::size_t>(k, v);
        else if (k == "d") c.ima.d = parse_number<std::size_t>(k, v);
        else if (k == "iterations") c.ima.iterations = parse_number<int>(k, v);
        else if (k == "attention") c.ima.attention = parse_attention_variant(v);
        else if (k == "embedding") c.ima.embedding = parse_embedding_variant(v);
        else if (k == "unifier") c.ima.unifier = parse_unifier_direction(v);
        else if (k == "attention_tanh") c.ima.attention_tanh = parse_bool(k, v);
        else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
        else if (k == "lr") c.adam.lr = parse_number<double>(k, v);
        else if (k == "beta1") c.adam.beta1 = parse_number<double>(k, v);
        else if (k == "beta2") c.adam.beta2 = parse_number<double>(k, v);
        else if (k == "eps") c.adam.eps = parse_number<double>(k, v);
        else if (k == "threads") c.threads = parse_number<unsigned>(k, v);
        else if (k == "deterministic") c.deterministic = parse_bool(k, v);
        else if (k == "out_dir") c.out_dir = v;
        else if (k == "checkpoint_every_epoch") c.checkpoint_every_epoch = parse_bool(k, v);
        else throw std::invalid_argument("unknown config key '" + k + "'");
    }
    return c;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) { return from_map(kv, TrainConfig{}); }

std::uint64_t TrainConfig::validation_seed() const { return Rng::splitmix(seed ^ 0x76616c6964ULL); }

std::string TrainConfig::run_name() const {
    if (model == ModelKind::lstm) return "lstm-d" + std::to_string(ima.d) + "-seed" + std::to_string(seed);
    std::string n = "ima-" + to_string(ima.attention) + "-" + to_string(ima.embedding);
    if (ima.unifier == UnifierDirection::reversed) n += "-rev";
    n += "-d" + std::to_string(ima.d) + "-T" + std::to_string(ima.iterations);
    if (regime == Regime::curriculum) n += "-curriculum";
    return n + "-seed" + std::to_string(seed);
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

void write_key_values(std::ostream& os, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

TrainConfig read_train_config(const std::filesystem::path& path, TrainConfig base) {
    return TrainConfig::from_map(read_key_values(path), std::move(base));
}

const std::vector<CurriculumStage>& curriculum_schedule() {
    static const std::vector<CurriculumStage> stages{
        {{1, 2}, 1},
        {{1, 2, 3, 7, 9, 12}, 2},
        {{1, 2, 3, 4, 6, 7, 8, 9, 11, 12}, 3},
        {{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, 4},
    };
    return stages;
}

std::vector<CurriculumStage> curriculum_for(const std::vector<int>& tasks) {
    const std::set<int> wanted(tasks.begin(), tasks.end());
    std::vector<CurriculumStage> out;
    for (const auto& st : curriculum_schedule()) {
        CurriculumStage s{{}, st.iterations};
        for (int t : st.tasks)
            if (wanted.count(t)) s.tasks.push_back(t);
        if (s.tasks.empty() || (!out.empty() && s.tasks == out.back().tasks)) continue;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batching

namespace {

Sample shuffle_rules(const Sample& s, Rng& rng) {
    const std::size_t n = s.context.rules.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Sample out;
    out.task_id = s.task_id;
    out.queries = s.queries;
    std::vector<std::size_t> where(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.context.rules.push_back(s.context.rules[perm[i]]);
        where[perm[i]] = i;
    }
    for (std::size_t k : s.noise)
        if (k < n) out.noise.push_back(where[k]);
    std::sort(out.noise.begin(), out.noise.end());
    return out;
}

}  // namespace

std::vector<std::vector<Sample>> make_batches(const std::vector<Sample>& data, std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw InfeasibleBatch("batch_size must be positive");
    if (data.empty()) return {};
    std::map<int, std::vector<std::size_t>> by_task;
    for (std::size_t i = 0; i < data.size(); ++i) by_task[data[i].task_id].push_back(i);
    if (batch_size < by_task.size())
        throw InfeasibleBatch("batch_size " + std::to_string(batch_size) + " is smaller than the " +
                              std::to_string(by_task.size()) + " tasks present");
    const std::size_t nb = (data.size() + batch_size - 1) / batch_size;

    std::vector<std::vector<std::size_t>> idx(nb);
    std::vector<std::size_t> pool;
    for (auto& [task, members] : by_task) {
        rng.shuffle(members.begin(), members.end());
        for (std::size_t b = 0; b < nb; ++b) idx[b].push_back(members[b % members.size()]);
        for (std::size_t j = nb; j < members.size(); ++j) pool.push_back(members[j]);
    }
    rng.shuffle(pool.begin(), pool.end());
    std::size_t next = 0;
    for (std::size_t b = 0; b < nb && next < pool.size(); ++b)
        while (idx[b].size() < batch_size && next < pool.size()) idx[b].push_back(pool[next++]);
    for (std::size_t b = 0; next < pool.size(); b = (b + 1) % nb) idx[b].push_back(pool[next++]);

    std::vector<std::vector<Sample>> out(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        rng.shuffle(idx[b].begin(), idx[b].end());
        for (std::size_t i : idx[b]) out[b].push_back(shuffle_rules(data[i], rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

std::unique_ptr<Model> make_model(const TrainConfig& cfg) {
    if (cfg.model == ModelKind::lstm) return std::make_unique<LstmBaseline>(LstmConfig{cfg.ima.d}, cfg.seed);
    return std::make_unique<ImaModel>(cfg.ima, cfg.seed);
}

std::vector<Sample> training_set(const TrainConfig& cfg, const std::vector<int>& tasks) {
    return generate_dataset(tier_configs(tasks, tier_by_name("validation"), cfg.seed), cfg.per_task_count, cfg.threads)
        .samples;
}

std::vector<Sample> validation_set(const TrainConfig& cfg, const std::vector<int>& tasks) {
    return generate_dataset(tier_configs(tasks, tier_by_name("validation"), cfg.validation_seed()), cfg.val_per_task,
                            cfg.threads)
        .samples;
}

namespace {

std::vector<Sample> filter_tasks(const std::vector<Sample>& data, const std::vector<int>& tasks) {
    const std::set<int> keep(tasks.begin(), tasks.end());
    std::vector<Sample> out;
    for (const auto& s : data)
        if (keep.count(s.task_id)) out.push_back(s);
    return out;
}

class Trainer {
public:
    Trainer(const TrainConfig& cfg, std::unique_ptr<Model> model) : cfg_(cfg), model_(std::move(model)) {
        report_.run_name = cfg.run_name();
        report_.manifest = cfg.to_map();
        report_.manifest["run_name"] = report_.run_name;
        report_.manifest["model_name"] = model_->name();
        report_.manifest["generator_version"] = std::to_string(kGeneratorVersion);
        report_.manifest["validation_seed"] = std::to_string(cfg.validation_seed());
        if (!cfg.out_dir.empty()) dir_ = cfg.out_dir / report_.run_name;
    }

    void phase(const std::vector<Sample>& train, const std::vector<Sample>& val, int iterations, int epochs, int stage,
               bool track_best) {
        for (int e = 0; e < epochs; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            Rng rng = Rng::stream(cfg_.seed, 0x6261746368ULL, static_cast<std::uint64_t>(epoch_));
            const auto batches = make_batches(train, cfg_.batch_size, rng);
            double loss_sum = 0;
            std::size_t queries = 0;
            for (const auto& batch : batches) {
                const auto [l, n] = step(batch, iterations);
                if (first_batch_) {
                    report_.initial_loss = l / static_cast<double>(n);
                    first_batch_ = false;
                }
                loss_sum += l;
                queries += n;
            }
            ++epoch_;
            EpochRecord rec;
            rec.epoch = epoch_;
            rec.stage = stage;
            rec.iterations = iterations;
            rec.train_loss = queries ? loss_sum / static_cast<double>(queries) : 0.0;
            const auto scores = score_samples(*model_, val, iterations, cfg_.threads);
            for (const auto& [task, sc] : scores) rec.val_accuracy[task] = sc.accuracy();
            rec.val_mean = mean_accuracy(scores);
            if (!dir_.empty() && cfg_.checkpoint_every_epoch) {
                const auto path = dir_ / ("epoch-" + std::to_string(epoch_) + ".ckpt");
                save_model(path, *model_);
                rec.checkpoint = path.string();
            }
            if (track_best && rec.val_mean > report_.best_val_mean) {
                report_.best_val_mean = rec.val_mean;
                report_.best_epoch = epoch_;
                best_ = model_->clone();
                if (!dir_.empty()) {
                    const auto path = dir_ / "best.ckpt";
                    save_model(path, *model_);
                    report_.best_checkpoint = path.string();
                }
            }
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report_.epochs.push_back(std::move(rec));
        }
    }

    TrainRun finish() {
        if (!dir_.empty()) {
            const auto path = dir_ / "final.ckpt";
            save_model(path, *model_);
            report_.final_checkpoint = path.string();
            std::ofstream csv(dir_ / "report.csv");
            write_train_report_csv(csv, report_);
            std::ofstream man(dir_ / "report.csv.manifest");
            write_key_values(man, report_.manifest);
        }
        TrainRun run;
        run.report = std::move(report_);
        run.best = best_ ? std::move(best_) : model_->clone();
        run.final = std::move(model_);
        return run;
    }

private:
    // Returns (summed BCE, query count) for the batch, then applies one Adam step.
    std::pair<double, std::size_t> step(const std::vector<Sample>& batch, int iterations) {
        ParamSet& ps = model_->params();
        if (grads_.empty()) grads_ = ps.zeros_like();
        for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), 0.0);
        std::size_t nq = 0;
        for (const auto& s : batch) nq += s.queries.size();
        if (nq == 0) return {0.0, 0};
        const double inv = 1.0 / static_cast<double>(nq);

        auto one = [&](const Sample& s, std::vector<Tensor>& into) {
            Tape tape(&ps);
            const auto probs = model_->forward(tape, s, iterations);
            Var loss = bce_loss(tape, probs[0], s.queries[0].target);
            for (std::size_t i = 1; i < probs.size(); ++i) loss = add(tape, loss, bce_loss(tape, probs[i], s.queries[i].target));
            tape.backward(loss, inv);
            tape.accumulate_param_grads(into);
            return tape.value(loss).item();
        };

        double loss = 0;
        if (cfg_.deterministic || cfg_.threads <= 1) {
            for (const auto& s : batch) loss += one(s, grads_);
        } else {
            std::vector<std::vector<Tensor>> per(batch.size());
            std::vector<double> losses(batch.size());
            parallel_for(batch.size(), cfg_.threads, [&](std::size_t i) {
                per[i] = ps.zeros_like();
                losses[i] = one(batch[i], per[i]);
            });
            for (std::size_t i = 0; i < batch.size(); ++i) {
                loss += losses[i];
                for (std::size_t k = 0; k < grads_.size(); ++k)
                    for (std::size_t j = 0; j < grads_[k].size(); ++j) grads_[k].data[j] += per[i][k].data[j];
            }
        }
        adam_step(ps, grads_, adam_, cfg_.adam);
        return {loss, nq};
    }

    const TrainConfig& cfg_;
    std::unique_ptr<Model> model_;
    std::unique_ptr<Model> best_;
    AdamState adam_;
    std::vector<Tensor> grads_;
    TrainReport report_;
    std::filesystem::path dir_;
    int epoch_ = 0;
    bool first_batch_ = true;
};

}  // namespace

TrainRun train_on(const TrainConfig& cfg, std::unique_ptr<Model> model, const std::vector<Sample>& train,
                  const std::vector<Sample>& val, int iterations) {
    Trainer t(cfg, std::move(model));
    t.phase(train, val, iterations, cfg.epochs, 0, true);
    return t.finish();
}

TrainRun train_multitask(const TrainConfig& cfg) {
    cfg.validate();
    return train_on(cfg, make_model(cfg), training_set(cfg, cfg.tasks), validation_set(cfg, cfg.tasks),
                    cfg.ima.iterations);
}

TrainRun train_curriculum(const TrainConfig& cfg) {
    cfg.validate();
    const auto stages = curriculum_for(cfg.tasks);
    const auto train = training_set(cfg, cfg.tasks);
    const auto val = validation_set(cfg, cfg.tasks);
    const int per_stage = std::max(1, cfg.epochs / static_cast<int>(stages.size()));
    Trainer t(cfg, make_model(cfg));
    for (std::size_t i = 0; i < stages.size(); ++i)
        t.phase(filter_tasks(train, stages[i].tasks), filter_tasks(val, stages[i].tasks), stages[i].iterations, per_stage,
                static_cast<int>(i) + 1, i + 1 == stages.size());
    return t.finish();
}

TrainRun train(const TrainConfig& cfg) {
    return cfg.regime == Regime::multitask ? train_multitask(cfg) : train_curriculum(cfg);
}

void write_train_report_csv(std::ostream& os, const TrainReport& r) {
    std::set<int> tasks;
    for (const auto& e : r.epochs)
        for (const auto& [t, _] : e.val_accuracy) tasks.insert(t);
    os << "epoch,stage,iterations,train_loss,val_mean";
    for (int t : tasks) os << ",val_task_" << t;
    os << ",seconds,checkpoint\n";
    for (const auto& e : r.epochs) {
        os << e.epoch << ',' << e.stage << ',' << e.iterations << ',' << fmt_double(e.train_loss) << ','
           << fmt_double(e.val_mean);
        for (int t : tasks) {
            os << ',';
            auto it = e.val_accuracy.find(t);
            if (it != e.val_accuracy.end()) os << fmt_double(it->second);
        }
        os << ',' << fmt_double(e.seconds) << ',' << e.checkpoint << '\n';
    }
}

}  // namespace lpnet
