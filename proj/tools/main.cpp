#include "qkdco/cli.hpp"

int main(int argc, char** argv) { return qkdco::run_cli(argc, argv); }
