#pragma once

namespace pc2wf {

// Entry point of the pc2wf executable. Returns 0 on success, 1 on a runtime
// failure and 2 on a usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace pc2wf
