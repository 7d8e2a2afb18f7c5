#include <iostream>

#include "kktsynth/cli.hpp"

int main(int argc, char** argv) { return kktsynth::run_cli(argc, argv, std::cout, std::cerr); }
