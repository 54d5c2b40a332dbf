#pragma once

#include <string>
#include <vector>

#include "pmrl/config.hpp"
#include "pmrl/eventlog.hpp"
#include "pmrl/trainer.hpp"

namespace pmrl {

// Every key the train/synth config file may contain.
std::vector<std::string> config_schema();

TrainingConfig training_config_from(const KeyValueConfig& cfg);
SynthSpec synth_spec_from(const KeyValueConfig& cfg);

// Entry point behind main(): parses argv, dispatches subcommands.
// Returns 0 on success, 1 for usage or configuration errors, 2 for
// runtime failures (IO, parsing of data files).
int run_cli(int argc, const char* const* argv);

}  // namespace pmrl
