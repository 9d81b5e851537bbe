#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparsedm/config.hpp"

namespace sparsedm::cli {

/// Exit codes of the sparsedm tool.
enum ExitCode : int {
  ok = 0,
  failure = 1,
  config_error = 2,
  pattern_error = 3,
  architecture_error = 4,
  compressed_path_error = 5,
};

/// Runs `sparsedm <command> [flags]`; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct PruneOptions {
  std::filesystem::path ckpt;
  std::string pattern;
  bool transposable = false;
};

struct SparseOptions {
  std::filesystem::path student;
  std::filesystem::path teacher;
};

struct SampleOptions {
  std::filesystem::path ckpt;
  bool compressed = false;
  bool svg = false;
};

void cmd_train_dense(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_prune(const RunConfig& config, const PruneOptions& opts, const std::filesystem::path& out_dir,
               std::ostream& log);
void cmd_train_sparse(const RunConfig& config, const SparseOptions& opts,
                      const std::filesystem::path& out_dir, std::ostream& log);
void cmd_sample(const RunConfig& config, const SampleOptions& opts, const std::filesystem::path& out_dir,
                std::ostream& log);
void cmd_eval(const RunConfig& config, const std::filesystem::path& ckpt,
              const std::filesystem::path& out_dir, std::ostream& log);
void cmd_sweep(const RunConfig& config, const std::filesystem::path& ckpt,
               const std::filesystem::path& out_dir, std::ostream& log);
void cmd_bench(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace sparsedm::cli
