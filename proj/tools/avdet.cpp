// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "avdet/cli.hpp"

int main(int argc, char** argv) { return avdet::run_cli(argc, argv, std::cout, std::cerr); }
