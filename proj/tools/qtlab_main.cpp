#include "qtlab/cli.hpp"

int main(int argc, char** argv) { return qtlab::run_cli(argc, argv); }
