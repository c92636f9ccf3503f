#include <iostream>

#include "randinf/cli.hpp"

int main(int argc, char** argv) { return randinf::cli_main(argc, argv, std::cout, std::cerr); }
