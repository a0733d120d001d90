#include "sinessl/harness/cli.hpp"

int main(int argc, char** argv) { return sinessl::cli_main(argc, argv); }
