#include "cli.hpp"

int main(int argc, char** argv) { return htd::cli::run(argc, argv); }
