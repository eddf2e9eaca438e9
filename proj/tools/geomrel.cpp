#include <iostream>

#include "geomrel/report.hpp"

int main(int argc, char** argv) { return geomrel::run_cli(argc, argv, std::cout, std::cerr); }
