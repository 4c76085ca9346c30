#include "coqf/cli.hpp"

int main(int argc, char** argv) { return coqf::run_cli(argc, argv); }
