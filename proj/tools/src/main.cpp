#include <iostream>

#include "reldetr/cli.hpp"

int main(int argc, char** argv) { return reldetr::cli::run(argc, argv, std::cout, std::cerr); }
