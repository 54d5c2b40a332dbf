#include "pmrl/cli.hpp"

int main(int argc, char** argv) { return pmrl::run_cli(argc, argv); }
