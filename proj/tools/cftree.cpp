#include "cftree/cli.hpp"

int main(int argc, char** argv) { return cftree::run_cli(argc, argv); }
