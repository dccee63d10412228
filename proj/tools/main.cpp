#include "cli.hpp"

int main(int argc, char** argv) { return adiff::cli::run(argc, argv); }
