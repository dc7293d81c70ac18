#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace varscale::cli {

enum ExitCode : int {
  kOk = 0,
  kRuntimeFailure = 1,
  kUsageError = 2,
  kVerificationFailure = 3,
};

inline constexpr int kManifestVersion = 1;

// Entry point shared by the executable and the tests.
//   varscale train     [--config F | --manifest F] [--out DIR] [--resume CKPT] [--key=value ...]
//   varscale eval      --checkpoint CKPT [--checkpoint CKPT ...] [--episodes N] [--seed S]
//   varscale sweep     [--config F] --mu0 a,b --mu-init c,d --out DIR [--key=value ...]
//   varscale gradcheck --method M [--seed S] [--instances N] [--report F]
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

// Convenience overload for tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Splits "--a.b=v" / "--a.b v" tokens into "a.b=v" overrides.
std::vector<std::string> parse_overrides(const std::vector<std::string>& tokens);

}  // namespace varscale::cli
