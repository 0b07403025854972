// Entry point for the stabnet command-line tool.
#include "stabnet/cli.hpp"

int main(int argc, char** argv) { return stabnet::cli::dispatch(argc, argv); }
