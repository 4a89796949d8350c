#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cxr/config.hpp"
#include "cxr/dataset.hpp"

namespace cxr {

// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumeric = 3 };

struct PrepSummary {
  std::size_t written = 0;
  std::vector<RejectedFile> rejected;
};

// Re-encodes every decodable image under src as a size x size JPEG in the same
// split/class layout under out, and writes out/manifest.csv. Files that fail to
// decode are listed in the summary (the caller turns them into exit code 2).
PrepSummary cmd_prep(const std::filesystem::path& src, const std::filesystem::path& out, std::size_t size,
                     const std::vector<std::string>& classes, std::ostream& log);

// Trains from the config and writes model.cxrf, history.csv, resolved_config.json
// and train.log (the only file carrying timestamps) into config.output_dir.
void cmd_train(RunConfig config, std::ostream& log);

// Writes confusion.csv and metrics.csv into out_dir and prints the table.
void cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_root, Split split,
                  const std::filesystem::path& out_dir, std::ostream& log);

void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image, std::ostream& log);

void cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& log);

// Parses arguments (without the program name), runs the command and maps failures
// to exit codes: ConfigError -> 1, DataError and unreadable checkpoints -> 2,
// NumericError -> 3.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cxr
