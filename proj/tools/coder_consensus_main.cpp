// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return coder_consensus::cli::run_main(argc, argv, std::cout, std::cerr);
}
