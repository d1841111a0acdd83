#include "codemix/cli/cli.hpp"

int main(int argc, char** argv) { return codemix::cli_main(argc, argv); }
