// Pipeline orchestration: content-addressed stage drivers for dataset
// generation, teacher / reward / student training, evaluation, benchmarking
// and the ablation grid, plus the command-line dispatcher.
//
// Each run_* overwrites its own stage directory and requires upstream
// artifacts to exist (missing ones are validation errors naming the command
// to run). The ensure_* variants build a stage only when its artifact is
// absent; the ablation suite chains them so cells share cached stages.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ractd/config.hpp"

namespace ractd {

std::filesystem::path run_gen_data(const ExperimentConfig& cfg);
std::filesystem::path run_train_teacher(const ExperimentConfig& cfg);
std::filesystem::path run_train_reward(const ExperimentConfig& cfg);
std::filesystem::path run_reverse_dynamics(const ExperimentConfig& cfg);
std::filesystem::path run_distill(const ExperimentConfig& cfg);
std::filesystem::path run_eval(const ExperimentConfig& cfg);
std::filesystem::path run_bench(const ExperimentConfig& cfg);
std::filesystem::path run_ablate(const ExperimentConfig& cfg);

// Oracle-based solver and identity checks; one [PASS]/[FAIL] line each.
// Returns 0 when everything passes, 2 otherwise.
int run_verify(std::ostream& os);

std::filesystem::path ensure_dataset(const ExperimentConfig& cfg);
std::filesystem::path ensure_teacher(const ExperimentConfig& cfg);
std::filesystem::path ensure_reward(const ExperimentConfig& cfg);
std::filesystem::path ensure_reverse_dynamics(const ExperimentConfig& cfg);
std::filesystem::path ensure_distill(const ExperimentConfig& cfg);

// args excludes the program name. Exit code 0 on success, 1 on validation
// errors (bad flags, bad config, missing dependencies), 2 on runtime
// failures (a diagnostics file lands in the output root).
int run_cli(const std::vector<std::string>& args);

}  // namespace ractd
