#include <iostream>

#include "misfit/cli.hpp"

int main(int argc, char** argv) {
    return misfit::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
