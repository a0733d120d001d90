#pragma once

namespace sinessl {

/// Entry point of the command-line tool. Returns 0 on success, 2 on a
/// configuration or usage error, 1 on any other failure.
int cli_main(int argc, char** argv);

}  // namespace sinessl
