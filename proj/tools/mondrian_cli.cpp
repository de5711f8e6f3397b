#include "mondrian/cli.hpp"

int main(int argc, char** argv) { return mondrian::run_cli(argc, argv); }
