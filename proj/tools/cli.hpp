#pragma once

namespace htd::cli {

// Exit codes: 0 success, 1 unexpected failure, 2 configuration or parameter
// error, 3 numeric failure.
int run(int argc, char** argv);

}  // namespace htd::cli
