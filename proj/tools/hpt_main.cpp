#include <cstdio>
#include <exception>

#include "hpt/cli.hpp"

int main(int argc, char** argv) {
    try {
        hpt::CommandInvocation inv = hpt::parse_cli_args(argc, argv);
        return hpt::dispatch(inv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n%s", e.what(), hpt::cli_usage().c_str());
        return 2;
    }
}
