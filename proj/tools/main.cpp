#include "inoc/cli.hpp"

int main(int argc, char** argv) { return inoc::run_cli(argc, argv); }
