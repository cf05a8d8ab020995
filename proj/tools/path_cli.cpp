#include "path/cli.hpp"

int main(int argc, char** argv) { return path::run_cli(argc, argv); }
