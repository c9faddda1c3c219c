#include "membranes/cli.hpp"

int main(int argc, char** argv) { return membranes::cli_main(argc, argv); }
