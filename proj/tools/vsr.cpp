// SPDX-License-Identifier: Apache-2.0
#include <vsr/cli.hpp>

#include <iostream>

int main(int argc, char **argv) { return vsr::run_cli(argc, argv, std::cout, std::cerr); }
