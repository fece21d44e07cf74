#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cftree {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,          // includes no_feasible_leaf under --allow-infeasible
  kExitInfeasible = 1,  // no feasible leaf, or a failed certificate
  kExitInput = 2,       // bad flags, files or documents
  kExitSolver = 3,      // internal solver failure
};

/// Runs one command; args exclude the program name. Summaries go to out,
/// diagnostics to err, full documents to the --out path.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace cftree
