#include "lpnet/eval.hpp"

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "lpnet/parallel.hpp"

namespace lpnet {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void check_length(const std::vector<double>& p, const Sample& s, const std::string& who) {
    if (p.size() != s.queries.size())
        throw std::logic_error(who + " returned " + std::to_string(p.size()) + " probabilities for " +
                               std::to_string(s.queries.size()) + " queries");
}

}  // namespace

std::map<int, TaskScore> score_samples(const Predictor& model, const std::vector<Sample>& samples, int iterations,
                                       unsigned threads) {
    std::vector<std::size_t> correct(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        const auto& s = samples[i];
        const auto p = model.predict(s, iterations);
        check_length(p, s, model.name());
        std::size_t c = 0;
        for (std::size_t q = 0; q < p.size(); ++q) c += predicted_label(p[q]) == s.queries[q].target;
        correct[i] = c;
    });
    std::map<int, TaskScore> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& sc = out[samples[i].task_id];
        sc.correct += correct[i];
        sc.total += samples[i].queries.size();
    }
    return out;
}

double mean_accuracy(const std::map<int, TaskScore>& scores) {
    if (scores.empty()) return 0.0;
    double sum = 0;
    for (const auto& [_, sc] : scores) sum += sc.accuracy();
    return sum / static_cast<double>(scores.size());
}

void EvalReport::add_tier(const std::string& tier, const std::map<int, TaskScore>& scores) {
    auto& row = accuracy[tier];
    row.clear();
    for (const auto& [task, sc] : scores) row[task] = sc.accuracy();
    means[tier] = mean_accuracy(scores);
}

EvalReport evaluate(const Predictor& model, const Dataset& ds, int iterations, unsigned threads) {
    return evaluate(model, std::vector<Dataset>{ds}, iterations, threads);
}

EvalReport evaluate(const Predictor& model, const std::vector<Dataset>& sets, int iterations, unsigned threads) {
    EvalReport r;
    r.meta["model"] = model.name();
    r.meta["iterations"] = std::to_string(iterations);
    for (const auto& ds : sets) {
        std::string tier = ds.manifest.tier.empty() ? "test" : ds.manifest.tier;
        for (int k = 2; r.accuracy.count(tier); ++k) tier = ds.manifest.tier + "-" + std::to_string(k);
        r.add_tier(tier, score_samples(model, ds.samples, iterations, threads));
    }
    return r;
}

void write_eval_csv(std::ostream& os, const EvalReport& r) {
    os << "tier,task,accuracy\n";
    for (const auto& [tier, row] : r.accuracy) {
        for (const auto& [task, acc] : row) os << tier << ',' << task << ',' << fmt(acc) << '\n';
        os << tier << ",mean," << fmt(r.means.at(tier)) << '\n';
    }
}

std::vector<double> OracleModel::predict(const Sample& sample, int) const {
    Solver solver(sample.context);
    std::vector<double> out;
    for (const auto& q : sample.queries) out.push_back(solver.entails(q.query) ? 1.0 : 0.0);
    return out;
}

std::vector<double> ConstantModel::predict(const Sample& sample, int) const {
    return std::vector<double>(sample.queries.size(), p_);
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

double bucket_accuracy(const Predictor& model, const std::vector<Sample>& bucket, int iterations, unsigned threads) {
    std::size_t c = 0, n = 0;
    for (const auto& [_, sc] : score_samples(model, bucket, iterations, threads)) {
        c += sc.correct;
        n += sc.total;
    }
    return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

SweepCurve run_sweep(const Predictor& model, const Dataset& sweep, const std::string& kind, int fixed_iterations,
                     unsigned threads) {
    const auto buckets = split_buckets(sweep);
    if (buckets.size() != sweep.manifest.buckets.size()) throw std::logic_error("sweep buckets do not match manifest");
    SweepCurve c;
    c.kind = kind;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        const int n = sweep.manifest.buckets[b];
        const int t = fixed_iterations < 0 ? n + 1 : fixed_iterations;
        c.x.push_back(n);
        c.iterations.push_back(t);
        c.accuracy.push_back(bucket_accuracy(model, buckets[b], t, threads));
    }
    return c;
}

}  // namespace

SweepCurve multihop_sweep(const Predictor& model, const Dataset& sweep, unsigned threads) {
    return run_sweep(model, sweep, "steps", -1, threads);
}

SweepCurve multihop_sweep(const Predictor& model, int max_steps, std::size_t per_bucket, std::uint64_t seed,
                          unsigned threads) {
    return multihop_sweep(model, generate_sweep_programs(SweepKind::steps, max_steps, per_bucket, seed, threads), threads);
}

SweepCurve length_sweep(const Predictor& model, const Dataset& sweep, int iterations, unsigned threads) {
    if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
    return run_sweep(model, sweep, "length", iterations, threads);
}

SweepCurve length_sweep(const Predictor& model, int max_len, std::size_t per_bucket, std::uint64_t seed, int iterations,
                        unsigned threads) {
    return length_sweep(model, generate_sweep_programs(SweepKind::length, max_len, per_bucket, seed, threads),
                        iterations, threads);
}

void write_sweep_csv(std::ostream& os, const SweepCurve& c) {
    os << c.kind << ",iterations,accuracy\n";
    for (std::size_t i = 0; i < c.x.size(); ++i) os << c.x[i] << ',' << c.iterations[i] << ',' << fmt(c.accuracy[i]) << '\n';
}

// ---------------------------------------------------------------------------
// PCA

PcaResult pca_project(const std::vector<std::vector<double>>& vectors, std::size_t k) {
    if (vectors.empty()) throw std::invalid_argument("pca: no vectors");
    const std::size_t dim = vectors[0].size();
    if (dim == 0) throw std::invalid_argument("pca: empty vectors");
    if (k == 0 || k > dim) throw std::invalid_argument("pca: k must be in 1.." + std::to_string(dim));
    const auto n = static_cast<Eigen::Index>(vectors.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = vectors[static_cast<std::size_t>(i)];
        if (v.size() != dim) throw std::invalid_argument("pca: ragged input");
        X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(dim));
    }
    X.rowwise() -= X.colwise().mean();
    const auto kk = static_cast<Eigen::Index>(k);

    PcaResult r;
    if (n < 2 || X.cwiseAbs().maxCoeff() == 0.0) {
        r.degenerate = true;
        r.coords = Eigen::MatrixXd::Zero(n, kk);
        r.components = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), kk);
        r.variance.assign(k, 0.0);
        r.explained_ratio.assign(k, 0.0);
        return r;
    }
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca: eigen decomposition failed");
    const auto& vals = es.eigenvalues();  // ascending
    const double total = vals.cwiseMax(0.0).sum();
    r.components.resize(static_cast<Eigen::Index>(dim), kk);
    for (Eigen::Index j = 0; j < kk; ++j) {
        const Eigen::Index src = static_cast<Eigen::Index>(dim) - 1 - j;
        Eigen::VectorXd v = es.eigenvectors().col(src);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (std::abs(v(i)) > 1e-12) {
                if (v(i) < 0) v = -v;
                break;
            }
        r.components.col(j) = v;
        const double var = std::max(vals(src), 0.0);
        r.variance.push_back(var);
        r.explained_ratio.push_back(total > 0 ? var / total : 0.0);
    }
    r.coords = X * r.components;
    return r;
}

void write_pca_csv(std::ostream& os, const PcaResult& r, const std::vector<std::string>& labels) {
    if (labels.size() != static_cast<std::size_t>(r.coords.rows()))
        throw std::invalid_argument("pca csv: label count does not match rows");
    os << "label";
    for (Eigen::Index j = 0; j < r.coords.cols(); ++j) os << ",pc" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < r.coords.rows(); ++i) {
        os << labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < r.coords.cols(); ++j) os << ',' << fmt(r.coords(i, j));
        os << '\n';
    }
}

std::vector<std::string> saturation_series(char c, std::size_t max_len) {
    std::vector<std::string> out;
    for (std::size_t n = 1; n <= max_len; ++n) out.emplace_back(n, c);
    return out;
}

std::vector<std::vector<double>> embedding_probe(const ImaModel& model, const std::vector<std::string>& literals) {
    Tape tape(&model.params(), false);
    std::vector<std::vector<double>> out;
    for (const auto& lit : literals) out.push_back(tape.value(model.embed_literal(tape, CharVocab::encode(lit))).data);
    return out;
}

void write_embeddings_csv(std::ostream& os, const std::vector<std::string>& labels,
                          const std::vector<std::vector<double>>& rows) {
    if (labels.size() != rows.size()) throw std::invalid_argument("embedding csv: label count does not match rows");
    os << "label";
    if (!rows.empty())
        for (std::size_t j = 0; j < rows[0].size(); ++j) os << ",e" << j;
    os << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << labels[i];
        for (double x : rows[i]) os << ',' << fmt(x);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Attention maps

std::vector<AttentionMap> attention_maps(const ImaModel& model, const Sample& sample, int iterations) {
    std::vector<AttentionMap> out;
    for (const auto& q : sample.queries) {
        AttentionMap m;
        m.query = render(q.query);
        m.target = q.target;
        m.probability = model.probability(sample.context, q.query, iterations, &m.trace);
        out.push_back(std::move(m));
    }
    return out;
}

void write_attention_csv(std::ostream& os, const AttentionMap& m) {
    if (m.trace.attention.empty()) {
        os << "iteration\n";
        return;
    }
    const std::size_t slots = m.trace.attention[0].size();
    os << "iteration";
    for (std::size_t j = 0; j + 2 < slots; ++j) os << ",rule_" << j + 1;
    os << ",null,blank\n";
    for (std::size_t t = 0; t < m.trace.attention.size(); ++t) {
        os << t + 1;
        for (double a : m.trace.attention[t]) os << ',' << fmt(a);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Dimension sweep

std::vector<DimensionResult> dimension_sweep(const TrainConfig& base, const std::vector<std::size_t>& dims,
                                             const std::vector<Dataset>& test_sets, int repeats) {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    std::vector<DimensionResult> out;
    for (std::size_t d : dims) {
        DimensionResult res;
        res.d = d;
        for (int r = 0; r < repeats; ++r) {
            TrainConfig cfg = base;
            cfg.ima.d = d;
            cfg.seed = base.seed + static_cast<std::uint64_t>(r);
            auto run = train(cfg);
            res.reports.push_back(evaluate(*run.best, test_sets, cfg.ima.iterations, cfg.threads));
            res.runs.push_back(std::move(run.report));
        }
        for (const auto& rep : res.reports)
            for (const auto& [tier, m] : rep.means) res.mean_accuracy[tier] += m / static_cast<double>(repeats);
        out.push_back(std::move(res));
    }
    return out;
}

void write_dimension_csv(std::ostream& os, const std::vector<DimensionResult>& results) {
    os << "d,run,tier,mean_accuracy\n";
    for (const auto& res : results) {
        for (std::size_t r = 0; r < res.reports.size(); ++r)
            for (const auto& [tier, m] : res.reports[r].means) os << res.d << ',' << r << ',' << tier << ',' << fmt(m) << '\n';
        for (const auto& [tier, m] : res.mean_accuracy) os << res.d << ",mean," << tier << ',' << fmt(m) << '\n';
    }
}

}  // namespace lpnet
