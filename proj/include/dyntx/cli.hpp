#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyntx {

// Runs one command. Returns 0 on success, 2 when assumption validation
// fails (the report is still written), 1 on any error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyntx
