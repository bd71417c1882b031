#include "kellynet/cli.hpp"

int main(int argc, char** argv) { return kellynet::cli::run(argc, argv); }
