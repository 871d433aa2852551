#include "ehrenfest/cli.hpp"

int main(int argc, char** argv) { return ehrenfest::cli::run_main(argc, argv); }
