#pragma once

#include <string>
#include <vector>

namespace reffakd {

/// Runs one subcommand (train-cae, gen-softlabels, train-student, grid,
/// profile, compare). `args` excludes the program name. Returns 0 on
/// success, 1 on a validation error (bad flags, bad config values), 2 on a
/// runtime failure (unreadable files, diverged runs).
int dispatch(const std::vector<std::string>& args);

}  // namespace reffakd
