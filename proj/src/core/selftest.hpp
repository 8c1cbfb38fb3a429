#pragma once

#include <string>

namespace papercut {

// Quick cross-module invariant suites (determinism, conservation, oracle
// equivalence, round trips, one miniature end-to-end episode). Prints one
// line per check when verbose; returns the number of failed checks.
int run_selftest(bool verbose = true);

}  // namespace papercut
