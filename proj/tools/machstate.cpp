#include "machstate/cli.hpp"

int main(int argc, char** argv) { return machstate::cli_main(argc, argv); }
