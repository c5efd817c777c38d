#pragma once

// Disciplines backed by child processes speaking a line-delimited JSON
// protocol on stdin/stdout:
//
//   request : {"id": <int>, "z": [...], "y_in": [...]}
//   response: {"id": <int>, "status": "ok"|"error", "y_out": [...], "message": <string>}
//
// One object per line. Crashes, malformed responses, id mismatches, remote
// errors and timeouts all become DisciplineOutput failures.

#include <mdots/problems.hpp>

#include <filesystem>
#include <string>

namespace mdots::problems {

struct ExternalCommand {
  /// Shell command line, run through /bin/sh -c.
  std::string command;
  double timeout_seconds = 300.0;
  /// Number of child processes; more than one permits concurrent calls.
  int pool_size = 1;
};

mda::Discipline external_discipline(std::string name, ExternalCommand command,
                                    std::vector<int> inputs, std::vector<int> outputs);

/// Objective served by a child process: the request carries the full
/// coupling vector as "y_in" and the first entry of "y_out" is f_obj.
ObjectiveFunction external_objective(ExternalCommand command);

/// Loads a problem whose disciplines and objective are external commands.
/// Schema (JSON):
///   {"id": str, "z_lower": [..], "z_upper": [..], "y_lower": [..], "y_upper": [..],
///    "disciplines": [{"name": str, "command": str, "inputs": [int], "outputs": [int],
///                     "timeout": s, "pool": k}],
///    "objective": {"command": str, "timeout": s}}
MdoProblem load_external_problem(const std::filesystem::path& description);

}  // namespace mdots::problems
