#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clab {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitAudit = 3 };

int cli_run(int argc, char** argv);
// args excludes the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clab
