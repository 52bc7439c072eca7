#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eegadapt {

// Environment variable naming the default data directory for synth/train/eval.
inline constexpr const char* kDataDirEnv = "EEGADAPT_DATA_DIR";

// Subcommands: synth, train, finetune, eval, inspect.
// Returns 0 on success, 2 on usage errors, 1 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace eegadapt
