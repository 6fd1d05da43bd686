#include "rnflow/cli.hpp"

int main(int argc, char** argv) { return rnflow::run_cli(argc, argv); }
