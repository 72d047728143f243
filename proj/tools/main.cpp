#include "commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return mp3net::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
