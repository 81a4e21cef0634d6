#include "mmoba/cli.hpp"

int main(int argc, char** argv) { return mmoba::run_cli(argc, argv); }
