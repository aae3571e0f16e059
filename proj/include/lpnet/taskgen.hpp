#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpnet/logic.hpp"
#include "lpnet/rng.hpp"

namespace lpnet {

inline constexpr int kNumTasks = 12;
inline constexpr int kGeneratorVersion = 1;

std::string_view task_name(int task_id);

struct GenConfig {
    int task_id = 1;
    int symbol_len_min = 1;  // predicates and constants
    int symbol_len_max = 2;
    int var_len_min = 1;
    int var_len_max = 2;
    int noise_rules = 2;
    /// Overrides the chain length of tasks 3-5 and 9-10 (defaults 1,2,3 and 1,2).
    std::optional<int> chain_steps;
    std::uint64_t seed = 0;

    void validate() const;
    int effective_chain_steps() const;
};

struct Sample {
    int task_id = 0;
    Program context;
    std::vector<QueryLine> queries;
    /// Indices of noise rules in `context` (generator-side metadata, not serialized).
    std::vector<std::size_t> noise;
};

struct DifficultyTier {
    std::string name;
    int max_symbol_len;
    int extra_noise;
};

/// validation < easy < medium < hard, in symbol length and noise.
const std::vector<DifficultyTier>& difficulty_tiers();
const DifficultyTier& tier_by_name(std::string_view name);

class CapacityExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GenerationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fresh symbol over 'a'..'z' (or 'A'..'Z' when `upper`) with length uniform
/// in [len_min, len_max], not in `used`. The result is inserted into `used`.
std::string gen_symbol(Rng& rng, int len_min, int len_max, std::set<std::string>& used, bool upper = false);

Sample generate_sample(const GenConfig& cfg, Rng& rng);

/// Sample `index` of a task set, drawn from its own stream of `cfg.seed`.
Sample generate_indexed_sample(const GenConfig& cfg, std::uint64_t index);

std::vector<Sample> generate_samples(const GenConfig& cfg, std::size_t count, unsigned threads = 1);

struct DatasetManifest {
    std::string tier = "validation";
    std::uint64_t seed = 0;
    std::vector<int> tasks;
    std::size_t count_per_task = 0;
    int symbol_len_min = 1;
    int symbol_len_max = 2;
    int noise_rules = 2;
    int generator_version = kGeneratorVersion;
    /// Sweep datasets: bucket key (steps or length) per group of samples.
    std::string sweep_kind;
    std::vector<int> buckets;

    std::map<std::string, std::string> to_map() const;
    static DatasetManifest from_map(const std::map<std::string, std::string>& kv);
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Sample> samples;
};

/// One GenConfig per task; each sample i of task t is generated from its own
/// stream (cfg.seed, t, i), so the output does not depend on `threads`.
Dataset generate_dataset(const std::vector<GenConfig>& cfgs, std::size_t count_per_task, unsigned threads = 1);

/// Writes `<out_path>` in the dataset text format and `<out_path>.manifest`.
DatasetManifest generate_dataset(const std::vector<GenConfig>& cfgs, std::size_t count_per_task,
                                 const std::filesystem::path& out_path, const std::string& tier = "validation",
                                 unsigned threads = 1);

/// Configs for every listed task at a difficulty tier.
std::vector<GenConfig> tier_configs(const std::vector<int>& tasks, const DifficultyTier& tier, std::uint64_t seed);

void write_samples(std::ostream& os, const std::vector<Sample>& samples);
std::string render(const Sample& s);
std::vector<Sample> parse_samples(std::string_view text);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
/// Reads samples and, if present, the sibling manifest; task ids are restored
/// from the manifest's task list and per-task count.
Dataset read_dataset(const std::filesystem::path& path);

enum class SweepKind { steps, length };

/// Task-3 programs: kind=steps gives chains of exactly n rules for n=1..n_max;
/// kind=length gives one-step programs whose symbols have exactly n characters.
/// Samples are grouped by bucket in `manifest.buckets` order.
Dataset generate_sweep_programs(SweepKind kind, int n_max, std::size_t per_bucket, std::uint64_t seed,
                                unsigned threads = 1);

std::vector<std::vector<Sample>> split_buckets(const Dataset& ds);

}  // namespace lpnet
