// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface. One entry point parses a subcommand (gen, train,
// eval, infer, gradcheck, ablate) and drives the library; all printing goes
// through the provided streams so the surface is testable in-process.

#pragma once

#include <iosfwd>

namespace avdet {

/// Returns the process exit code: 0 on success, nonzero on bad usage, any
/// thrown error, or a failed check.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace avdet
