#include "kbid/cli.hpp"

int main(int argc, char** argv) { return kbid::run_cli(argc, argv); }
