#pragma once

#include <iosfwd>

namespace fcdx {

// Built-in invariant suite: gradient probes for every differentiable op,
// attention properties, and the probabilistic-aggregation identities. Prints
// one PASS/FAIL line per check; returns the failure count.
int run_selftest(std::ostream& out);

}  // namespace fcdx
