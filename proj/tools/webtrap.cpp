#include <iostream>

#include "webtrap/cli/cli.hpp"

int main(int argc, char** argv) {
    // before any thread exists, so sigwait sees SIGINT/SIGTERM
    webtrap::cli::block_shutdown_signals();
    return webtrap::cli::run(argc, argv, std::cout, std::cerr);
}
