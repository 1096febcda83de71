#include "provgen/cli.hpp"

int main(int argc, char** argv) { return provgen::cli::run(argc, argv); }
