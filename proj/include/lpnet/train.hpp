#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpnet/autodiff.hpp"
#include "lpnet/models.hpp"
#include "lpnet/taskgen.hpp"

namespace lpnet {

// Full-scale settings; desk runs scale epochs and counts through TrainConfig.
inline constexpr int kFullEpochs = 120;
inline constexpr std::size_t kFullBatchSize = 32;
inline constexpr std::size_t kFullPerTaskCount = 20000;
inline constexpr std::size_t kValidationPerTask = 1000;

enum class Regime { multitask, curriculum };
enum class ModelKind { ima, lstm };

std::string to_string(Regime r);
std::string to_string(ModelKind k);
Regime parse_regime(std::string_view s);
ModelKind parse_model_kind(std::string_view s);

struct TrainConfig {
    Regime regime = Regime::multitask;
    ModelKind model = ModelKind::ima;
    std::vector<int> tasks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    int epochs = kFullEpochs;
    std::size_t batch_size = kFullBatchSize;
    std::size_t per_task_count = kFullPerTaskCount;
    std::size_t val_per_task = kValidationPerTask;
    /// Model size and variants; ima.iterations is the multi-task T.
    ImaConfig ima;
    std::uint64_t seed = 0;
    AdamHyper adam;
    unsigned threads = 1;
    /// Sequential gradient reduction on one thread.
    bool deterministic = true;
    /// Where checkpoints and the report go; empty keeps everything in memory.
    std::filesystem::path out_dir;
    bool checkpoint_every_epoch = true;

    void validate() const;
    std::map<std::string, std::string> to_map() const;
    /// Applies the listed keys on top of `base`; unknown keys are errors.
    static TrainConfig from_map(const std::map<std::string, std::string>& kv, TrainConfig base);
    static TrainConfig from_map(const std::map<std::string, std::string>& kv);
    /// Seed of the held-out validation set (never used for gradient steps).
    std::uint64_t validation_seed() const;
    /// File-name stem: model variant, d, T and seed.
    std::string run_name() const;
};

/// `key=value` lines; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& os, const std::map<std::string, std::string>& kv);
TrainConfig read_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct CurriculumStage {
    std::vector<int> tasks;
    int iterations = 1;
};

/// {1,2}@1 -> +{3,7,9,12}@2 -> +{4,6,8,11}@3 -> all 12@4
const std::vector<CurriculumStage>& curriculum_schedule();
/// The schedule restricted to `tasks`, dropping stages that add nothing.
std::vector<CurriculumStage> curriculum_for(const std::vector<int>& tasks);

class InfeasibleBatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Shuffled batches in which every batch holds at least one sample of each task
/// present; rule order inside every context is shuffled as well.
std::vector<std::vector<Sample>> make_batches(const std::vector<Sample>& data, std::size_t batch_size, Rng& rng);

struct EpochRecord {
    int epoch = 0;  // 1-based, across stages
    int stage = 0;  // 0 for multi-task
    int iterations = 0;
    double train_loss = 0;
    std::map<int, double> val_accuracy;
    double val_mean = 0;
    double seconds = 0;
    std::string checkpoint;
};

struct TrainReport {
    std::string run_name;
    std::vector<EpochRecord> epochs;
    /// Mean BCE over the first batch before any update.
    double initial_loss = 0;
    int best_epoch = 0;
    double best_val_mean = -1;
    std::string best_checkpoint;
    std::string final_checkpoint;
    std::map<std::string, std::string> manifest;
};

void write_train_report_csv(std::ostream& os, const TrainReport& r);

struct TrainRun {
    TrainReport report;
    /// Parameters with the best validation mean (of the last stage for curricula).
    std::unique_ptr<Model> best;
    std::unique_ptr<Model> final;
};

std::unique_ptr<Model> make_model(const TrainConfig& cfg);

/// Generated training and validation sets for `tasks` under cfg's seeds.
std::vector<Sample> training_set(const TrainConfig& cfg, const std::vector<int>& tasks);
std::vector<Sample> validation_set(const TrainConfig& cfg, const std::vector<int>& tasks);

/// Plain loop over fixed data at a fixed T; used by both regimes.
TrainRun train_on(const TrainConfig& cfg, std::unique_ptr<Model> model, const std::vector<Sample>& train,
                  const std::vector<Sample>& val, int iterations);

TrainRun train_multitask(const TrainConfig& cfg);
TrainRun train_curriculum(const TrainConfig& cfg);
TrainRun train(const TrainConfig& cfg);

}  // namespace lpnet
