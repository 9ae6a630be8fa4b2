#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace faceanon {

enum ExitCode : int {
  kExitOk = 0,
  kExitGeneric = 1,
  kExitConfig = 2,
  kExitDataset = 3,
  kExitModel = 4,
  kExitMedia = 5,
};

/// Entry point of the faceanon command line. `args` excludes the program
/// name. Errors are reported on `err` and mapped to an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace faceanon
