#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "lpnet/models.hpp"
#include "lpnet/oracle.hpp"
#include "lpnet/taskgen.hpp"
#include "lpnet/train.hpp"

namespace lpnet {

inline constexpr double kDecisionThreshold = 0.5;

/// Ties (p exactly 0.5) predict 1.
inline int predicted_label(double p) { return p >= kDecisionThreshold ? 1 : 0; }

struct TaskScore {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Scores every query of every sample; samples may run concurrently, totals are
/// summed in sample order.
std::map<int, TaskScore> score_samples(const Predictor& model, const std::vector<Sample>& samples, int iterations,
                                       unsigned threads = 1);

double mean_accuracy(const std::map<int, TaskScore>& scores);

struct EvalReport {
    /// tier -> task -> accuracy
    std::map<std::string, std::map<int, double>> accuracy;
    std::map<std::string, double> means;
    std::map<std::string, std::string> meta;

    void add_tier(const std::string& tier, const std::map<int, TaskScore>& scores);
};

EvalReport evaluate(const Predictor& model, const Dataset& ds, int iterations, unsigned threads = 1);
/// Evaluates several test sets into one report (one tier per dataset).
EvalReport evaluate(const Predictor& model, const std::vector<Dataset>& sets, int iterations, unsigned threads = 1);

/// Rows tier,task,accuracy with one "mean" row per tier.
void write_eval_csv(std::ostream& os, const EvalReport& r);

/// Answers with the resolution prover: probability 1 for entailed queries, else 0.
class OracleModel : public Predictor {
public:
    std::vector<double> predict(const Sample& sample, int iterations) const override;
    std::string name() const override { return "oracle"; }
};

class ConstantModel : public Predictor {
public:
    explicit ConstantModel(double p) : p_(p) {}
    std::vector<double> predict(const Sample& sample, int iterations) const override;
    std::string name() const override { return "constant"; }

private:
    double p_;
};

struct SweepCurve {
    std::string kind;  // "steps" or "length"
    std::vector<int> x;
    std::vector<double> accuracy;
    std::vector<int> iterations;
};

inline constexpr std::size_t kSweepPerBucket = 1000;

/// Bucket n is run with T = n + 1.
SweepCurve multihop_sweep(const Predictor& model, const Dataset& sweep, unsigned threads = 1);
SweepCurve multihop_sweep(const Predictor& model, int max_steps, std::size_t per_bucket, std::uint64_t seed,
                          unsigned threads = 1);
/// Every bucket is run with the same T.
SweepCurve length_sweep(const Predictor& model, const Dataset& sweep, int iterations, unsigned threads = 1);
SweepCurve length_sweep(const Predictor& model, int max_len, std::size_t per_bucket, std::uint64_t seed, int iterations,
                        unsigned threads = 1);

void write_sweep_csv(std::ostream& os, const SweepCurve& c);

struct PcaResult {
    Eigen::MatrixXd coords;      // n x k
    Eigen::MatrixXd components;  // dim x k, unit columns
    std::vector<double> variance;
    std::vector<double> explained_ratio;
    /// All input vectors identical: coordinates and variances are zero.
    bool degenerate = false;
};

/// Mean-centred projection onto the top-k eigenvectors of the sample covariance.
/// Each eigenvector's first nonzero component is made positive.
PcaResult pca_project(const std::vector<std::vector<double>>& vectors, std::size_t k);

void write_pca_csv(std::ostream& os, const PcaResult& r, const std::vector<std::string>& labels);

/// "p", "pp", ... up to `max_len` repeats.
std::vector<std::string> saturation_series(char c = 'p', std::size_t max_len = 64);
/// Literal embedding of each string (rows) under the model's embedding GRU.
std::vector<std::vector<double>> embedding_probe(const ImaModel& model, const std::vector<std::string>& literals);
void write_embeddings_csv(std::ostream& os, const std::vector<std::string>& labels,
                          const std::vector<std::vector<double>>& rows);

struct AttentionMap {
    std::string query;
    int target = 0;
    double probability = 0;
    StepTrace trace;
};

std::vector<AttentionMap> attention_maps(const ImaModel& model, const Sample& sample, int iterations);
/// Rows are iterations; columns are rule slots in context order, then null and blank.
void write_attention_csv(std::ostream& os, const AttentionMap& m);

struct DimensionResult {
    std::size_t d = 0;
    std::vector<TrainReport> runs;
    std::vector<EvalReport> reports;
    /// Mean over runs of each tier mean.
    std::map<std::string, double> mean_accuracy;
};

/// Trains `repeats` runs per d (seeds base.seed, base.seed+1, ...) on identical
/// data and evaluates each on `test_sets`.
std::vector<DimensionResult> dimension_sweep(const TrainConfig& base, const std::vector<std::size_t>& dims,
                                             const std::vector<Dataset>& test_sets, int repeats = 1);

void write_dimension_csv(std::ostream& os, const std::vector<DimensionResult>& results);

}  // namespace lpnet
