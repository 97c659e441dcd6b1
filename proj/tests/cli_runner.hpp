#pragma once

// Runs the bpg executable through the shell and captures its output.

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "test_util.hpp"

#ifndef BPG_CLI_PATH
#error "BPG_CLI_PATH must name the bpg executable"
#endif

namespace testutil {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

/// `args` is appended verbatim to the executable path; `scratch` holds the
/// captured streams.
inline CliResult run_cli(const std::string& args, const TempDir& scratch,
                         const std::string& stdin_path = "") {
  const std::string out = scratch.str("cli_stdout.txt");
  const std::string err = scratch.str("cli_stderr.txt");
  std::string cmd = shell_quote(BPG_CLI_PATH) + " " + args + " >" + shell_quote(out) + " 2>" +
                    shell_quote(err);
  if (!stdin_path.empty()) cmd += " <" + shell_quote(stdin_path);
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

}  // namespace testutil
