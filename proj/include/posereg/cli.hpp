#pragma once

namespace posereg {

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int cli_dispatch(int argc, const char* const* argv);

}  // namespace posereg
