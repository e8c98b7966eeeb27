// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  The `vsr` command line, callable in-process.
 */
#ifndef VSR_CLI_HPP
#define VSR_CLI_HPP

#include <ostream>

namespace vsr {

/// Parses and runs one command. Returns the process exit code: 0 on success,
/// 1 with a one-line diagnostic on `err` otherwise.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace vsr

#endif // VSR_CLI_HPP
