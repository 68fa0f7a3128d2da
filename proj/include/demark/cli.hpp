#pragma once

#include <string>
#include <vector>

namespace demark {

// Full CLI dispatch: generate / train / infer / eval. Returns the process
// exit code: 0 success, 1 validation/config error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args);

} // namespace demark
