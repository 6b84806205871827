#pragma once

#include <string>
#include <vector>

namespace dispatchrl {

/// Entry point behind main(): train / test / compare / render-demo /
/// list-scenarios. Returns the process exit status.
int run_cli(const std::vector<std::string>& args);

} // namespace dispatchrl
