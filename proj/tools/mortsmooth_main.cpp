#include <iostream>

#include "mortsmooth/cli.hpp"

int main(int argc, char** argv) {
    return mortsmooth::cli_main(argc, argv, std::cout, std::cerr);
}
