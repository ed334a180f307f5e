#include "resnet_ntk/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return resnet_ntk::run_cli(argc, argv, std::cout, std::cerr);
}
