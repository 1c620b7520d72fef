#pragma once

namespace pprec::cli {

/// Entry point for the `pprec` binary: parses argv, dispatches the
/// subcommand, and maps failures to exit codes (0 success, 2 config,
/// 3 data, 4 numeric, 1 unexpected). Callable in-process for tests.
int run(int argc, const char* const* argv);

}  // namespace pprec::cli
