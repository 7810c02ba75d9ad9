// SPDX-License-Identifier: Apache-2.0

#include <formbench/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return formbench::run_cli(argc, argv, std::cout, std::cerr);
}
